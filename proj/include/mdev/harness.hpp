#pragma once

#include "mdev/integrator.hpp"
#include "mdev/stats.hpp"
#include "mdev/stein.hpp"

#include "json.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdev {

enum class ExperimentKind { kTailRatio, kBerryEsseen, kMdp, kConcentration, kLm21 };
enum class Statistic { kW, kS, kBoth };
enum class ConcentrationKind { kDriftSum, kYSum, kPsiSum };
enum class Lm21Generator { kCenteredExponential, kBounded, kGaussianSquare };

std::string to_string(ExperimentKind k);
std::string to_string(Statistic s);
std::string to_string(ConcentrationKind k);
std::string to_string(Lm21Generator g);

struct Lm21Spec {
  Lm21Generator generator = Lm21Generator::kCenteredExponential;
  double alpha = 1.0;
  std::int64_t n = 1000;
  // c in E(z^2 exp{c |z|^alpha}); must keep the moment finite.
  double moment_c = 0.25;
  // Thresholds in units of sqrt(n).
  std::vector<double> x_grid{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kTailRatio;
  nlohmann::json model = "ou";
  std::string observable = "x";
  std::vector<double> eta_list{0.2, 0.1, 0.05};
  std::optional<std::int64_t> m_override;
  std::int64_t n_reps = 20000;
  std::vector<double> x_grid;  // default 0:0.25:2.5
  double a_mdp = 2.0;
  double b_mdp = 1.0;
  Statistic statistic = Statistic::kBoth;
  std::uint64_t seed = 1;
  std::optional<std::int64_t> burn_in;  // nullopt: ceil(10/(K1 eta))
  int quad_order = 16;
  ConcentrationKind concentration = ConcentrationKind::kPsiSum;
  std::vector<double> y_grid;  // empty: derived from the sample spread
  Lm21Spec lm21;
  // Drop diverging replications instead of failing the run.
  bool exclude_divergent = false;

  ExperimentSpec();
};

/// Per-replication values kept by the harness.
struct RepRecord {
  double W = 0.0;
  double S = 0.0;
  double Y = 0.0;
  double V = 0.0;
  double psi_sum = 0.0;
  double drift_sum = 0.0;
  double y_sum = 0.0;
  bool diverged = false;
};

struct RunOptions {
  int threads = 0;  // 0: MDEV_THREADS, then hardware concurrency
  bool exclude_divergent = false;
};

int resolve_threads(int requested);

/// Runs n_reps independent trajectories and returns their statistics indexed
/// by replication. The result does not depend on the number of threads.
std::vector<RepRecord> run_replications(const Model& model, const Observable& obs,
                                        const SteinSolution& sol, double eta, std::int64_t m,
                                        std::int64_t burn_in, std::uint64_t seed,
                                        std::int64_t n_reps, const RunOptions& opts = {});

/// Seed used for the replications at step size eta.
std::uint64_t eta_seed(std::uint64_t seed, double eta);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact two-sided Clopper-Pearson interval for k successes in n trials.
Interval clopper_pearson(std::int64_t k, std::int64_t n, double level = 0.95);

struct TailRow {
  double eta = 0.0;
  std::string statistic;
  int side = 1;  // +1: P(T > x), -1: P(-T > x)
  double x = 0.0;
  std::int64_t exceed = 0;
  std::int64_t n = 0;
  double p_hat = 0.0;
  Interval p_ci;
  double ratio = 0.0;
  Interval ratio_ci;
};

/// Strict exceedances (sample > x) against 1 - Phi(x), with exact CIs.
/// `sorted` must be ascending.
std::vector<TailRow> estimate_tail_ratio(std::span<const double> sorted,
                                         std::span<const double> x_grid);

/// sup_x |F_n(x) - Phi(x)| over an ascending sample.
double ks_distance(std::span<const double> sorted);

struct MdpPoint {
  double estimate = 0.0;
  Interval estimate_ci;
  double target = 0.0;
  double normal_value = 0.0;  // -ln(1 - Phi(a b)) / a^2
  std::int64_t exceed = 0;
  std::int64_t n = 0;
  double p_hat = 0.0;
  bool low_count = false;
  bool infinite = false;
};

/// -(1/a^2) ln P(sample/a > b) against the rate b^2/2.
MdpPoint mdp_estimate(std::span<const double> samples, double a, double b);

struct ConcentrationRow {
  std::string check;
  double eta = 0.0;
  double y = 0.0;
  std::int64_t exceed = 0;
  std::int64_t n = 0;
  double p_hat = 0.0;
  double p_upper = 0.0;
  double bound = 0.0;
  // Unfitted comparison bound where one exists (lm21: the two-branch form
  // with the moment constant); NaN otherwise.
  double reference = std::numeric_limits<double>::quiet_NaN();
  bool violation = false;
};

struct ConcentrationFit {
  std::string check;
  double eta = 0.0;
  std::map<std::string, double> constants;
  bool dominated = false;
  std::string note;
};

struct ConcentrationResult {
  std::vector<ConcentrationRow> rows;
  ConcentrationFit fit;
};

constexpr double kConstantCap = 1e3;

/// 2 exp(-c y^2 / k): largest c whose bound stays above every CP upper tail.
ConcentrationResult fit_y_sum(std::span<const double> values, std::span<const double> y_grid,
                              std::int64_t k, double eta);
/// c1 exp(-y^2 / (c1 (N + c y))): smallest c1 on a log grid in [1, 1e3] that
/// admits some c <= 1e3.
ConcentrationResult fit_psi_sum(std::span<const double> values, std::span<const double> y_grid,
                                std::int64_t N, double eta);
/// C exp(-c3 y): log-linear fit of the upper tail, then C raised to dominate.
ConcentrationResult fit_drift_sum(std::span<const double> values,
                                  std::span<const double> y_grid, double eta);

/// n E(z^2 exp{c |z|^alpha}) for one generator, by adaptive quadrature.
double lm21_u_n(Lm21Generator gen, double alpha, double moment_c, std::int64_t n);

/// Empirical P(sum z_i >= x) for i.i.d. generator draws against lm21_bound
/// with the smallest dominating c_alpha; flagged when c_alpha > 1e3.
ConcentrationResult lm21_falsifier(const Lm21Spec& spec, std::int64_t n_reps, std::uint64_t seed,
                                   const RunOptions& opts = {});

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct EtaSamples {
  double eta = 0.0;
  std::int64_t m = 0;
  std::int64_t burn_in = 0;
  std::uint64_t seed = 0;
  std::vector<double> W;  // ascending
  std::vector<double> S;  // ascending
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<EtaSamples> samples;
  std::vector<TailRow> tail;
  struct KsRow {
    double eta;
    std::string statistic;
    std::int64_t n;
    double ks;
  };
  std::vector<KsRow> ks;
  struct MdpRow {
    double eta;
    std::string statistic;
    double a;
    double b;
    MdpPoint point;
  };
  std::vector<MdpRow> mdp;
  std::vector<ConcentrationRow> concentration;
  std::vector<ConcentrationFit> fits;
  std::map<std::string, double> summary;
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;

  bool all_checks_passed() const;
};

/// Builds the model, observable and certified Stein solution for a spec, runs
/// every replication and aggregates according to spec.kind.
ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

}  // namespace mdev
