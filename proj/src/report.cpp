#include "mdev/report.hpp"

#include "mdev/config.hpp"
#include "mdev/types.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mdev {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      os_ << (first ? "" : ",") << h;
      first = false;
    }
    os_ << '\n';
  }
  CsvWriter& operator<<(double v) { return cell(format_double(v)); }
  CsvWriter& operator<<(std::int64_t v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(int v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(bool v) { return cell(v ? "1" : "0"); }
  CsvWriter& operator<<(const std::string& v) { return cell(v); }
  void end_row() {
    os_ << '\n';
    fresh_ = true;
  }
  std::string str() const { return os_.str(); }

 private:
  CsvWriter& cell(const std::string& s) {
    if (!fresh_) os_ << ',';
    os_ << s;
    fresh_ = false;
    return *this;
  }
  std::ostringstream os_;
  bool fresh_ = true;
};

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

}  // namespace

std::string tail_csv(const ExperimentResult& r) {
  CsvWriter w({"eta", "statistic", "side", "x", "exceed", "n", "p_hat", "p_lo", "p_hi", "ratio",
               "ratio_lo", "ratio_hi"});
  for (const auto& t : r.tail) {
    w << t.eta << t.statistic << t.side << t.x << t.exceed << t.n << t.p_hat << t.p_ci.lo
      << t.p_ci.hi << t.ratio << t.ratio_ci.lo << t.ratio_ci.hi;
    w.end_row();
  }
  return w.str();
}

std::string ks_csv(const ExperimentResult& r) {
  CsvWriter w({"eta", "statistic", "n", "ks"});
  for (const auto& k : r.ks) {
    w << k.eta << k.statistic << k.n << k.ks;
    w.end_row();
  }
  return w.str();
}

std::string mdp_csv(const ExperimentResult& r) {
  CsvWriter w({"eta", "statistic", "a", "b", "n", "exceed", "p_hat", "estimate", "estimate_lo",
               "estimate_hi", "target", "normal_value", "low_count"});
  for (const auto& m : r.mdp) {
    const auto& p = m.point;
    w << m.eta << m.statistic << m.a << m.b << p.n << p.exceed << p.p_hat << p.estimate
      << p.estimate_ci.lo << p.estimate_ci.hi << p.target << p.normal_value << p.low_count;
    w.end_row();
  }
  return w.str();
}

std::string conc_csv(const ExperimentResult& r) {
  CsvWriter w({"check", "eta", "y", "exceed", "n", "p_hat", "p_upper", "bound", "reference",
               "violation"});
  for (const auto& c : r.concentration) {
    w << c.check << c.eta << c.y << c.exceed << c.n << c.p_hat << c.p_upper << c.bound
      << c.reference << c.violation;
    w.end_row();
  }
  return w.str();
}

json result_to_json(const ExperimentResult& r) {
  json j;
  json samples = json::array();
  for (const auto& s : r.samples) {
    json e{{"eta", s.eta}, {"m", s.m}, {"burn_in", s.burn_in}, {"seed", s.seed}};
    if (!s.W.empty()) e["W"] = s.W;
    if (!s.S.empty()) e["S"] = s.S;
    samples.push_back(std::move(e));
  }
  j["samples"] = std::move(samples);

  json tail = json::array();
  for (const auto& t : r.tail) {
    tail.push_back({{"eta", t.eta}, {"statistic", t.statistic}, {"side", t.side}, {"x", t.x},
                    {"exceed", t.exceed}, {"n", t.n}, {"p_hat", t.p_hat},
                    {"p_ci", interval_json(t.p_ci)}, {"ratio", t.ratio},
                    {"ratio_ci", interval_json(t.ratio_ci)}});
  }
  j["tail"] = std::move(tail);

  json ks = json::array();
  for (const auto& k : r.ks) ks.push_back({{"eta", k.eta}, {"statistic", k.statistic}, {"n", k.n}, {"ks", k.ks}});
  j["ks"] = std::move(ks);

  json mdp = json::array();
  for (const auto& m : r.mdp) {
    const auto& p = m.point;
    mdp.push_back({{"eta", m.eta}, {"statistic", m.statistic}, {"a", m.a}, {"b", m.b},
                   {"n", p.n}, {"exceed", p.exceed}, {"p_hat", p.p_hat},
                   // JSON has no infinity; the flag carries it.
                   {"estimate", p.estimate}, {"estimate_ci", interval_json(p.estimate_ci)},
                   {"infinite", p.infinite}, {"low_count", p.low_count}, {"target", p.target},
                   {"normal_value", p.normal_value}});
  }
  j["mdp"] = std::move(mdp);

  json conc = json::array();
  for (const auto& c : r.concentration) {
    conc.push_back({{"check", c.check}, {"eta", c.eta}, {"y", c.y}, {"exceed", c.exceed},
                    {"n", c.n}, {"p_hat", c.p_hat}, {"p_upper", c.p_upper}, {"bound", c.bound},
                    {"reference", c.reference}, {"violation", c.violation}});
  }
  j["concentration"] = std::move(conc);

  json fits = json::array();
  for (const auto& f : r.fits) {
    fits.push_back({{"check", f.check}, {"eta", f.eta}, {"constants", f.constants},
                    {"dominated", f.dominated}, {"note", f.note}});
  }
  j["fits"] = std::move(fits);
  j["summary"] = r.summary;

  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = std::move(checks);
  j["all_checks_passed"] = r.all_checks_passed();
  j["warnings"] = r.warnings;

  json seeds = json::array();
  for (const auto& s : r.samples) seeds.push_back({{"eta", s.eta}, {"seed", s.seed}});
  j["manifest"] = {{"spec", spec_to_json(r.spec)},
                   {"master_seed", r.spec.seed},
                   {"eta_seeds", std::move(seeds)},
                   {"version", MDEV_VERSION}};
  return j;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

RunManifest::RunManifest(std::filesystem::path root, std::string subcommand, json config,
                         std::uint64_t seed)
    : root_(std::move(root)), subcommand_(std::move(subcommand)), config_(std::move(config)), seed_(seed) {
  std::filesystem::create_directories(root_);
}

void RunManifest::write(const std::string& name, const std::string& content) {
  const auto path = root_ / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error("write failed for " + path.string());
  files_.push_back({name, sha256_hex(content), content.size()});
}

void RunManifest::finish() {
  json files = json::array();
  for (const auto& f : files_) files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  json m{{"subcommand", subcommand_}, {"config", config_}, {"seed", seed_},
         {"version", MDEV_VERSION}, {"timing_seconds", timing_}, {"files", files}};
  std::ofstream out(root_ / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest.json");
}

}  // namespace mdev
