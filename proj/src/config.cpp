#include "mdev/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace mdev {

using nlohmann::json;

json parse_json_strict(const std::string& text) {
  std::vector<std::set<std::string>> seen;
  std::vector<std::string> where;
  auto cb = [&](int /*depth*/, json::parse_event_t ev, json& parsed) {
    switch (ev) {
      case json::parse_event_t::object_start:
        seen.emplace_back();
        break;
      case json::parse_event_t::object_end:
        seen.pop_back();
        break;
      case json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!seen.back().insert(key).second) throw ConfigError(key, "duplicate key");
        break;
      }
      default:
        break;
    }
    return true;
  };
  try {
    return json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
}

namespace {

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) throw ConfigError(join(path, item.key()), "unknown key");
  }
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

std::int64_t get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> get_number_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_number(v[i], idx(path, i)));
  return out;
}

void require_ascending_nonneg(const std::vector<double>& xs, const std::string& path) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] >= 0.0) || !std::isfinite(xs[i])) throw ConfigError(idx(path, i), "must be finite and >= 0");
    if (i > 0 && !(xs[i] > xs[i - 1])) throw ConfigError(idx(path, i), "grid must be strictly ascending");
  }
}

Matrix get_matrix(const json& v, const std::string& path) {
  if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nested array");
  const auto rows = v.size();
  Matrix M;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = get_number_list(v[i], idx(path, i));
    if (i == 0) M.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(row.size()));
    if (static_cast<Eigen::Index>(row.size()) != M.cols()) throw ConfigError(idx(path, i), "ragged matrix");
    for (std::size_t k = 0; k < row.size(); ++k) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
  }
  return M;
}

template <typename E>
E enum_from(const std::string& s, const std::string& path,
            std::initializer_list<std::pair<const char*, E>> table) {
  std::string names;
  for (const auto& [name, val] : table) {
    if (s == name) return val;
    names += std::string(names.empty() ? "" : ", ") + name;
  }
  throw ConfigError(path, "unknown value '" + s + "' (expected one of " + names + ")");
}

Lm21Generator generator_from(const std::string& s, const std::string& path) {
  return enum_from<Lm21Generator>(s, path, {{"centered_exponential", Lm21Generator::kCenteredExponential},
                                            {"bounded", Lm21Generator::kBounded},
                                            {"gaussian_square", Lm21Generator::kGaussianSquare}});
}

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& s) {
  return enum_from<ExperimentKind>(s, "kind", {{"tail-ratio", ExperimentKind::kTailRatio},
                                               {"berry-esseen", ExperimentKind::kBerryEsseen},
                                               {"mdp", ExperimentKind::kMdp},
                                               {"concentration", ExperimentKind::kConcentration},
                                               {"lm21", ExperimentKind::kLm21}});
}

Model model_from_json(const json& j) {
  std::string id;
  json params = json::object();
  if (j.is_string()) {
    id = j.get<std::string>();
  } else if (j.is_object()) {
    if (!j.contains("id")) throw ConfigError("model.id", "missing");
    id = get_string(j["id"], "model.id");
    params = j;
    params.erase("id");
  } else {
    throw ConfigError("model", "expected a string id or an object");
  }
  try {
    if (id == "ou") {
      reject_unknown(params, "model", {"a", "sigma"});
      const double a = params.contains("a") ? get_number(params["a"], "model.a") : 1.0;
      const double s = params.contains("sigma") ? get_number(params["sigma"], "model.sigma") : 1.0;
      return make_linear_model(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, s), "ou");
    }
    if (id == "ou-matrix") {
      reject_unknown(params, "model", {"A", "sigma"});
      if (!params.contains("A")) throw ConfigError("model.A", "missing");
      const Matrix A = get_matrix(params["A"], "model.A");
      const Matrix sigma = params.contains("sigma") ? get_matrix(params["sigma"], "model.sigma")
                                                    : Matrix::Identity(A.rows(), A.rows());
      return make_linear_model(A, sigma, "ou-matrix");
    }
    if (id == "tanh") {
      reject_unknown(params, "model", {"c"});
      const double c = params.contains("c") ? get_number(params["c"], "model.c") : 0.5;
      return make_tanh_model(c);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("model", e.what());
  }
  throw ConfigError("model.id", "unknown model '" + id + "' (expected ou, ou-matrix or tanh)");
}

ExperimentSpec spec_from_json(const json& j) {
  reject_unknown(j, "", {"kind", "model", "observable", "eta", "m", "n_reps", "x_grid", "a_mdp",
                         "b_mdp", "statistic", "seed", "burn_in", "quad_order", "concentration",
                         "y_grid", "lm21", "exclude_divergent"});
  ExperimentSpec s;
  if (j.contains("kind")) s.kind = experiment_kind_from_string(get_string(j["kind"], "kind"));
  if (j.contains("model")) s.model = j["model"];
  if (j.contains("observable")) s.observable = get_string(j["observable"], "observable");
  if (j.contains("eta")) {
    s.eta_list = get_number_list(j["eta"], "eta");
    if (s.eta_list.empty()) throw ConfigError("eta", "must not be empty");
  }
  for (std::size_t i = 0; i < s.eta_list.size(); ++i) {
    if (!(s.eta_list[i] > 0.0 && s.eta_list[i] < 1.0)) throw ConfigError(idx("eta", i), "must lie in (0, 1)");
  }
  if (j.contains("m")) {
    if (!j["m"].is_null()) {
      const auto m = get_int(j["m"], "m");
      if (m < 1) throw ConfigError("m", "must be >= 1");
      s.m_override = m;
    }
  }
  if (j.contains("n_reps")) s.n_reps = get_int(j["n_reps"], "n_reps");
  if (s.n_reps < 100) throw ConfigError("n_reps", "must be >= 100");
  if (j.contains("x_grid")) s.x_grid = get_number_list(j["x_grid"], "x_grid");
  require_ascending_nonneg(s.x_grid, "x_grid");
  if (j.contains("a_mdp")) s.a_mdp = get_number(j["a_mdp"], "a_mdp");
  if (!(s.a_mdp > 0.0)) throw ConfigError("a_mdp", "must be positive");
  if (j.contains("b_mdp")) s.b_mdp = get_number(j["b_mdp"], "b_mdp");
  if (!std::isfinite(s.b_mdp)) throw ConfigError("b_mdp", "must be finite");
  if (j.contains("statistic")) {
    s.statistic = enum_from<Statistic>(get_string(j["statistic"], "statistic"), "statistic",
                                       {{"W", Statistic::kW}, {"S", Statistic::kS}, {"both", Statistic::kBoth}});
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a nonnegative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("burn_in")) {
    const auto& b = j["burn_in"];
    if (b.is_string()) {
      if (b.get<std::string>() != "auto") throw ConfigError("burn_in", "expected \"auto\" or an integer");
    } else {
      const auto v = get_int(b, "burn_in");
      if (v < 0) throw ConfigError("burn_in", "must be >= 0");
      s.burn_in = v;
    }
  }
  if (j.contains("quad_order")) s.quad_order = static_cast<int>(get_int(j["quad_order"], "quad_order"));
  if (s.quad_order < 5 || s.quad_order > 64) throw ConfigError("quad_order", "must lie in [5, 64]");
  if (j.contains("concentration")) {
    s.concentration = enum_from<ConcentrationKind>(
        get_string(j["concentration"], "concentration"), "concentration",
        {{"drift_sum", ConcentrationKind::kDriftSum}, {"y_sum", ConcentrationKind::kYSum},
         {"psi_sum", ConcentrationKind::kPsiSum}});
  }
  if (j.contains("y_grid")) {
    s.y_grid = get_number_list(j["y_grid"], "y_grid");
    require_ascending_nonneg(s.y_grid, "y_grid");
  }
  if (j.contains("lm21")) {
    const auto& l = j["lm21"];
    reject_unknown(l, "lm21", {"generator", "alpha", "n", "moment_c", "x_grid"});
    if (l.contains("generator")) s.lm21.generator = generator_from(get_string(l["generator"], "lm21.generator"), "lm21.generator");
    if (l.contains("alpha")) s.lm21.alpha = get_number(l["alpha"], "lm21.alpha");
    if (!(s.lm21.alpha > 0.0 && s.lm21.alpha <= 1.0)) throw ConfigError("lm21.alpha", "must lie in (0, 1]");
    if (l.contains("n")) s.lm21.n = get_int(l["n"], "lm21.n");
    if (s.lm21.n < 1) throw ConfigError("lm21.n", "must be >= 1");
    if (l.contains("moment_c")) s.lm21.moment_c = get_number(l["moment_c"], "lm21.moment_c");
    if (!(s.lm21.moment_c > 0.0)) throw ConfigError("lm21.moment_c", "must be positive");
    if (l.contains("x_grid")) s.lm21.x_grid = get_number_list(l["x_grid"], "lm21.x_grid");
    require_ascending_nonneg(s.lm21.x_grid, "lm21.x_grid");
  }
  if (j.contains("exclude_divergent")) {
    if (!j["exclude_divergent"].is_boolean()) throw ConfigError("exclude_divergent", "expected a boolean");
    s.exclude_divergent = j["exclude_divergent"].get<bool>();
  }
  // Resolve the model now so a bad model fails at parse time.
  model_from_json(s.model);
  return s;
}

ExperimentSpec parse_config_text(const std::string& text) { return spec_from_json(parse_json_strict(text)); }

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json spec_to_json(const ExperimentSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["model"] = s.model;
  j["observable"] = s.observable;
  j["eta"] = s.eta_list;
  j["m"] = s.m_override ? json(*s.m_override) : json(nullptr);
  j["n_reps"] = s.n_reps;
  j["x_grid"] = s.x_grid;
  j["a_mdp"] = s.a_mdp;
  j["b_mdp"] = s.b_mdp;
  j["statistic"] = to_string(s.statistic);
  j["seed"] = s.seed;
  j["burn_in"] = s.burn_in ? json(*s.burn_in) : json("auto");
  j["quad_order"] = s.quad_order;
  j["concentration"] = to_string(s.concentration);
  j["y_grid"] = s.y_grid;
  j["lm21"] = {{"generator", to_string(s.lm21.generator)},
               {"alpha", s.lm21.alpha},
               {"n", s.lm21.n},
               {"moment_c", s.lm21.moment_c},
               {"x_grid", s.lm21.x_grid}};
  j["exclude_divergent"] = s.exclude_divergent;
  return j;
}

}  // namespace mdev
