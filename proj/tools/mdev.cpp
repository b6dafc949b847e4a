// mdev command line: simulate, stein-check, decompose, bounds eval, experiment.

#include "mdev/bounds.hpp"
#include "mdev/config.hpp"
#include "mdev/harness.hpp"
#include "mdev/integrator.hpp"
#include "mdev/report.hpp"
#include "mdev/stats.hpp"
#include "mdev/stein.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using namespace mdev;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed (overrides the config)");
  app->add_option("--out-dir", c.out_dir, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads (default: MDEV_THREADS, then all cores)")
      ->check(CLI::NonNegativeNumber);
}

// A model argument is either an id ("ou") or inline JSON ({"id": ...}).
json model_arg(const std::string& s) {
  if (!s.empty() && s.front() == '{') return parse_json_strict(s);
  return json(s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> parse_grid(const std::string& g) {
  std::vector<double> parts;
  std::stringstream ss(g);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      parts.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw DomainError("grid: bad number '" + tok + "'");
    }
  }
  if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
    throw DomainError("grid must be lo:step:hi with step > 0 and hi >= lo");
  }
  const auto n = static_cast<std::int64_t>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
  std::vector<double> xs;
  for (std::int64_t i = 0; i <= n; ++i) xs.push_back(parts[0] + static_cast<double>(i) * parts[1]);
  return xs;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::string model = "ou";
  double eta = 0.1;
  std::optional<std::int64_t> m;
  std::optional<std::int64_t> burn_in;
  std::uint64_t rep = 0;
};

int run_simulate(const SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const json mj = model_arg(a.model);
  const Model model = model_from_json(mj);
  const std::int64_t m = a.m ? *a.m : default_steps(a.eta);
  const std::int64_t burn = a.burn_in ? *a.burn_in : default_burn_in(model, a.eta);
  const std::uint64_t seed = a.common.seed.value_or(1);
  const Trajectory t = simulate(model, a.eta, m, burn, seed, a.rep);

  std::ostringstream csv;
  csv << "k";
  for (int i = 1; i <= t.dim; ++i) csv << ",theta" << i;
  csv << '\n';
  for (std::int64_t k = 0; k <= t.m; ++k) {
    csv << k;
    for (double v : t.state(k)) csv << ',' << format_double(v);
    csv << '\n';
  }
  const json side{{"eta", a.eta}, {"m", m}, {"seed", seed}, {"rep_index", a.rep},
                  {"burn_in", burn}, {"model", mj}};
  RunManifest out(a.common.out_dir.empty() ? "." : a.common.out_dir, "simulate", side, seed);
  out.write("trajectory.csv", csv.str());
  out.write("trajectory.json", side.dump(2) + "\n");
  out.set_timing("simulate", seconds_since(t0));
  out.finish();
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SteinArgs {
  Common common;
  std::string model = "ou";
  std::string observable = "x";
  bool dump_grid = false;
  int grid_n = 2001;
};

int run_stein_check(const SteinArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const json mj = model_arg(a.model);
  const Model model = model_from_json(mj);
  const Observable obs = observable_by_id(a.observable, model.dim());
  SteinSolution sol = solve_stein(model, obs);
  const auto grid = certification_grid(sol, a.grid_n, 10.0);
  const CertReport rep = certify(sol, model, obs, grid, sol.tolerance);

  std::ostringstream table;
  table << "model,observable,method,pi_h,residual_sup,tolerance,passed,d0,d1,d2,d3,d4,construction_residual\n";
  table << model.id() << ',' << a.observable << ',' << sol.method << ',' << format_double(sol.pi_h)
        << ',' << format_double(rep.residual_sup) << ',' << format_double(rep.tolerance) << ','
        << (rep.passed ? 1 : 0);
  for (double b : rep.derivative_bounds) table << ',' << format_double(b);
  table << ',' << format_double(sol.construction_residual) << '\n';
  std::cout << table.str();

  std::string dump;
  if (a.dump_grid) {
    if (model.dim() != 1) throw DomainError("--dump-grid needs a one-dimensional model");
    std::ostringstream os;
    os << "x,phi,dphi,d2phi\n";
    for (const auto& x : grid) {
      os << format_double(x[0]) << ',' << format_double(sol.phi(std::span<const double>(x.data(), 1))) << ','
         << format_double(sol.gradient(x)[0]) << ',' << format_double(sol.hessian(x)(0, 0)) << '\n';
    }
    dump = os.str();
    if (a.common.out_dir.empty()) std::cout << '\n' << dump;
  }
  if (!a.common.out_dir.empty()) {
    RunManifest out(a.common.out_dir, "stein-check",
                    {{"model", mj}, {"observable", a.observable}, {"grid_n", a.grid_n}}, 0);
    out.write("stein_check.csv", table.str());
    if (a.dump_grid) out.write("grid.csv", dump);
    out.set_timing("stein-check", seconds_since(t0));
    out.finish();
  }
  return rep.passed ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
  Common common;
  std::string model = "ou";
  std::string observable = "x2";
  double eta = 0.1;
  std::optional<std::int64_t> m;
  std::optional<std::int64_t> burn_in;
  std::int64_t n_reps = 10;
  int quad_order = 16;
};

int run_decompose(const DecomposeArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const json mj = model_arg(a.model);
  const Model model = model_from_json(mj);
  const Observable obs = observable_by_id(a.observable, model.dim());
  SteinSolution sol = solve_stein(model, obs);
  require_certified(certify(sol, model, obs, certification_grid(sol, 2001, 10.0), sol.tolerance));
  const std::int64_t m = a.m ? *a.m : default_steps(a.eta);
  const std::int64_t burn = a.burn_in ? *a.burn_in : default_burn_in(model, a.eta);
  const std::uint64_t seed = a.common.seed.value_or(1);

  std::ostringstream csv;
  csv << "rep,W,S,Y,V,H,R1,R2,R3,R4,R5,R6,residual,psi_sum\n";
  for (std::int64_t r = 0; r < a.n_reps; ++r) {
    const Trajectory t = simulate(model, a.eta, m, burn, seed, static_cast<std::uint64_t>(r));
    const StatBundle b = compute_stats(t, sol, model, obs, {true, a.quad_order});
    csv << r << ',' << format_double(b.W) << ',' << format_double(b.S) << ',' << format_double(b.Y)
        << ',' << format_double(b.V) << ',' << format_double(b.H);
    for (double v : b.R) csv << ',' << format_double(v);
    csv << ',' << format_double(b.decomposition_residual) << ',' << format_double(b.psi_sum) << '\n';
  }
  std::cout << csv.str();
  if (!a.common.out_dir.empty()) {
    RunManifest out(a.common.out_dir, "decompose",
                    {{"model", mj}, {"observable", a.observable}, {"eta", a.eta}, {"m", m},
                     {"burn_in", burn}, {"n_reps", a.n_reps}, {"quad_order", a.quad_order}},
                    seed);
    out.write("decompose.csv", csv.str());
    out.set_timing("decompose", seconds_since(t0));
    out.finish();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BoundsArgs {
  Common common;
  std::string fn;
  std::string grid;
  double eta = 0.1;
  double c = 1.0;
  double u_n = 1.0;
  double alpha = 1.0;
  double epsilon = 0.1;
  double delta = 0.1;
};

int run_bounds(const BoundsArgs& a) {
  const std::map<std::string, std::function<double(double)>> fns{
      {"normal_tail", [](double x) { return normal_tail(x); }},
      {"normal_cdf", [](double x) { return normal_cdf(x); }},
      {"sandwich_lower", [](double x) { return normal_tail_sandwich(x).lower; }},
      {"sandwich_upper", [](double x) { return normal_tail_sandwich(x).upper; }},
      {"cmd_envelope", [&](double x) { return cmd_envelope(x, a.eta, a.c); }},
      {"lm21_bound", [&](double x) { return lm21_bound(x, a.u_n, a.alpha, a.c); }},
      {"lm21_relaxed", [&](double x) { return lm21_bound(x, a.u_n, a.alpha, a.c, Lm21Form::kRelaxed); }},
      {"lm21_piecewise", [&](double x) { return lm21_piecewise(x, a.u_n, a.alpha, a.c); }},
      {"th0_envelope", [&](double x) { return th0_envelope(x, a.epsilon, a.delta, a.c); }},
  };
  const auto it = fns.find(a.fn);
  if (it == fns.end()) {
    std::string names;
    for (const auto& [k, v] : fns) names += " " + k;
    throw DomainError("unknown --fn '" + a.fn + "'; available:" + names);
  }
  std::ostringstream csv;
  csv << "x," << a.fn << '\n';
  for (double x : parse_grid(a.grid)) csv << format_double(x) << ',' << format_double(it->second(x)) << '\n';
  std::cout << csv.str();
  if (!a.common.out_dir.empty()) {
    RunManifest out(a.common.out_dir, "bounds eval",
                    {{"fn", a.fn}, {"grid", a.grid}, {"eta", a.eta}, {"c", a.c}, {"u_n", a.u_n},
                     {"alpha", a.alpha}, {"epsilon", a.epsilon}, {"delta", a.delta}},
                    0);
    out.write("bounds.csv", csv.str());
    out.finish();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
  Common common;
  std::string kind;
  std::string config;
};

int run_experiment_cmd(const ExperimentArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec spec = parse_config(a.config);
  spec.kind = experiment_kind_from_string(a.kind);
  if (a.common.seed) spec.seed = *a.common.seed;
  RunOptions opts;
  opts.threads = a.common.threads;
  const ExperimentResult res = run_experiment(spec, opts);
  const double run_time = seconds_since(t0);

  RunManifest out(a.common.out_dir.empty() ? "." : a.common.out_dir, "experiment " + a.kind,
                  spec_to_json(spec), spec.seed);
  out.write("result.json", result_to_json(res).dump(1) + "\n");
  out.write("tail.csv", tail_csv(res));
  out.write("ks.csv", ks_csv(res));
  out.write("mdp.csv", mdp_csv(res));
  out.write("conc.csv", conc_csv(res));
  out.set_timing("experiment", run_time);
  out.set_timing("total", seconds_since(t0));
  out.finish();

  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& c : res.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  return res.all_checks_passed() ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Euler-Maruyama moderate deviation toolkit"};
  app.set_version_flag("--version", std::string(MDEV_VERSION));
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Write one EM trajectory as CSV plus a JSON sidecar");
  add_common(c_sim, sim.common);
  c_sim->add_option("--model", sim.model, "Model id or inline JSON");
  c_sim->add_option("--eta", sim.eta, "Step size in (0, 1)");
  c_sim->add_option("--m", sim.m, "Recorded steps (default floor(eta^-2))");
  c_sim->add_option("--burn-in", sim.burn_in, "Burn-in steps (default ceil(10/(K1 eta)))");
  c_sim->add_option("--rep", sim.rep, "Replication index");

  SteinArgs st;
  auto* c_st = app.add_subcommand("stein-check", "Solve and certify a Stein equation");
  add_common(c_st, st.common);
  c_st->add_option("--model", st.model, "Model id or inline JSON");
  c_st->add_option("--observable", st.observable, "Observable id (x, x2, tanh)");
  c_st->add_flag("--dump-grid", st.dump_grid, "Also emit x, phi, phi', phi'' on the grid");
  c_st->add_option("--grid-n", st.grid_n, "Certification grid size")->check(CLI::PositiveNumber);

  DecomposeArgs de;
  auto* c_de = app.add_subcommand("decompose", "Per-trajectory martingale/remainder split");
  add_common(c_de, de.common);
  c_de->add_option("--model", de.model, "Model id or inline JSON");
  c_de->add_option("--observable", de.observable, "Observable id");
  c_de->add_option("--eta", de.eta, "Step size in (0, 1)");
  c_de->add_option("--m", de.m, "Recorded steps");
  c_de->add_option("--burn-in", de.burn_in, "Burn-in steps");
  c_de->add_option("--n-reps", de.n_reps, "Trajectories")->check(CLI::PositiveNumber);
  c_de->add_option("--quad-order", de.quad_order, "Gauss-Legendre order for remainders");

  BoundsArgs bo;
  auto* c_bo = app.add_subcommand("bounds", "Closed-form bound evaluators");
  c_bo->require_subcommand(1);
  auto* c_ev = c_bo->add_subcommand("eval", "Tabulate one evaluator over a grid");
  add_common(c_ev, bo.common);
  c_ev->add_option("--fn", bo.fn, "Evaluator name")->required();
  c_ev->add_option("--grid", bo.grid, "lo:step:hi")->required();
  c_ev->add_option("--eta", bo.eta, "Step size for cmd_envelope");
  c_ev->add_option("--c", bo.c, "Constant (envelope c, c_alpha, or moment c)");
  c_ev->add_option("--u-n", bo.u_n, "Variance proxy u_n");
  c_ev->add_option("--alpha", bo.alpha, "Exponent alpha in (0, 1]");
  c_ev->add_option("--epsilon", bo.epsilon, "epsilon for th0_envelope");
  c_ev->add_option("--delta", bo.delta, "delta for th0_envelope");

  ExperimentArgs ex;
  auto* c_ex = app.add_subcommand("experiment", "Run a replicated experiment from a JSON config");
  add_common(c_ex, ex.common);
  c_ex->add_option("kind", ex.kind, "tail-ratio | berry-esseen | mdp | concentration | lm21")
      ->required()
      ->check(CLI::IsMember({"tail-ratio", "berry-esseen", "mdp", "concentration", "lm21"}));
  c_ex->add_option("-c,--config", ex.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitError;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_st->parsed()) return run_stein_check(st);
    if (c_de->parsed()) return run_decompose(de);
    if (c_ev->parsed()) return run_bounds(bo);
    if (c_ex->parsed()) return run_experiment_cmd(ex);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  std::cerr << app.help();
  return kExitError;
}
