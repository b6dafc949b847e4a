#include "doctest.h"
#include "helpers.hpp"
#include "mdev/bounds.hpp"
#include "mdev/config.hpp"
#include "mdev/harness.hpp"
#include "mdev/report.hpp"
#include "mdev/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mdev;
using testing::ou;

namespace {

// Binomial probabilities summed term by term, as an oracle independent of
// the incomplete beta function.
double binom_cdf(std::int64_t k, std::int64_t n, double p) {
  double s = 0.0;
  for (std::int64_t i = 0; i <= k; ++i) {
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                  i * std::log(p) + (n - i) * std::log1p(-p));
  }
  return s;
}

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 7);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal(i, 0);
  std::sort(out.begin(), out.end());
  return out;
}

double inv_normal_cdf(double p) {
  // Bisection on the cdf; slow but independent of any library inverse.
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("Clopper-Pearson against binomial sums") {
    for (auto [k, n] : {std::pair<std::int64_t, std::int64_t>{5, 20}, {1, 10}, {37, 1000}, {999, 1000}}) {
      const Interval ci = clopper_pearson(k, n);
      CHECK(1.0 - binom_cdf(k - 1, n, ci.lo) == doctest::Approx(0.025).epsilon(1e-8));
      CHECK(binom_cdf(k, n, ci.hi) == doctest::Approx(0.025).epsilon(1e-8));
      CHECK(ci.lo <= double(k) / n);
      CHECK(double(k) / n <= ci.hi);
    }
    const std::int64_t n = 1000;
    const Interval z = clopper_pearson(0, n);
    CHECK(z.lo == 0.0);
    CHECK(z.hi == doctest::Approx(1.0 - std::pow(0.025, 1.0 / n)).epsilon(1e-10));
    // n * upper bound tends to -ln(0.025) = 3.689 for large n.
    CHECK(clopper_pearson(0, 1000000).hi * 1e6 == doctest::Approx(-std::log(0.025)).epsilon(1e-5));
    CHECK(z.hi * n == doctest::Approx(3.682).epsilon(1e-3));
    CHECK(clopper_pearson(n, n).hi == 1.0);
    CHECK_THROWS_AS(clopper_pearson(5, 3), DomainError);
  }

  TEST_CASE("KS distance examples") {
    CHECK(ks_distance(std::vector<double>(50, 0.0)) == doctest::Approx(0.5));
    std::vector<double> q;
    for (int i = 1; i <= 100; ++i) q.push_back(inv_normal_cdf((i - 0.5) / 100));
    CHECK(ks_distance(q) == doctest::Approx(0.005).epsilon(1e-6));
    CHECK(ks_distance(normal_sample(20000, 1)) <= 0.012);
    CHECK_THROWS_AS(ks_distance(std::vector<double>{1.0}), DomainError);
  }

  TEST_CASE("tail ratio examples") {
    const auto s = normal_sample(100000, 2);
    const std::vector<double> xs{0.0, 1.0};
    const auto rows = estimate_tail_ratio(s, xs);
    CHECK(rows[1].ratio_ci.lo <= 1.0);
    CHECK(1.0 <= rows[1].ratio_ci.hi);
    CHECK(rows[0].ratio_ci.lo <= 1.0);
    CHECK(1.0 <= rows[0].ratio_ci.hi);
    // Counts agree with the sorted sample, and the CI contains p_hat.
    for (const auto& r : rows) {
      CHECK(r.exceed == std::count_if(s.begin(), s.end(), [&](double v) { return v > r.x; }));
      CHECK(r.p_ci.lo <= r.p_hat);
      CHECK(r.p_hat <= r.p_ci.hi);
    }

    const std::vector<double> zeros(1000, 0.0);
    const std::vector<double> one{1.0};
    const auto z = estimate_tail_ratio(zeros, one);
    CHECK(z[0].ratio == 0.0);
    CHECK(z[0].ratio_ci.hi == doctest::Approx((1.0 - std::pow(0.025, 1e-3)) / normal_tail(1.0)).epsilon(1e-10));
    // Strict inequality: samples equal to x do not count.
    const std::vector<double> zero_x{0.0};
    CHECK(estimate_tail_ratio(zeros, zero_x)[0].exceed == 0);
  }

  TEST_CASE("MDP estimate examples") {
    const auto s = normal_sample(400000, 3);
    const MdpPoint p = mdp_estimate(s, 2.0, 1.0);
    CHECK(p.target == 0.5);
    CHECK(p.normal_value == doctest::Approx(-std::log(0.02275013194817921) / 4).epsilon(1e-12));
    CHECK(p.normal_value == doctest::Approx(0.94580).epsilon(1e-4));
    // Each 95% interval covers the normal value; require at least 4 of 5 seeds.
    int covered = 0;
    for (std::uint64_t seed = 3; seed < 8; ++seed) {
      const MdpPoint q = seed == 3 ? p : mdp_estimate(normal_sample(400000, seed), 2.0, 1.0);
      covered += q.estimate_ci.lo <= q.normal_value && q.normal_value <= q.estimate_ci.hi;
    }
    CHECK(covered >= 4);
    const MdpPoint median = mdp_estimate(s, 2.0, 0.0);
    CHECK(median.target == 0.0);
    CHECK(median.estimate == doctest::Approx(std::log(2.0) / 4).epsilon(0.01));
    const MdpPoint half = mdp_estimate(std::span(s).first(s.size() / 2), 2.0, 1.0);
    CHECK(p.estimate_ci.hi - p.estimate_ci.lo < half.estimate_ci.hi - half.estimate_ci.lo);
    const std::vector<double> small(100, 0.1);
    const MdpPoint none = mdp_estimate(small, 2.0, 1.0);
    CHECK(none.infinite);
    CHECK(none.low_count);
    CHECK(std::isinf(none.estimate));
  }

  TEST_CASE("replications do not depend on the thread count") {
    const Model m = make_tanh_model(0.5);
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const auto a = run_replications(m, o, s, 0.2, 25, 50, 4, 700, {1});
    const auto b = run_replications(m, o, s, 0.2, 25, 50, 4, 700, {4});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].W == b[i].W);
      CHECK(a[i].S == b[i].S);
      CHECK(a[i].psi_sum == b[i].psi_sum);
    }
  }

  TEST_CASE("divergence is a hard failure unless excluded") {
    const Model m = ou(50.0);
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    CHECK_THROWS_WITH_AS(run_replications(m, o, s, 0.5, 50, 0, 1, 10), doctest::Contains("replication 0"), Error);
    RunOptions opts;
    opts.exclude_divergent = true;
    const auto recs = run_replications(m, o, s, 0.5, 50, 0, 1, 10, opts);
    CHECK(std::all_of(recs.begin(), recs.end(), [](const RepRecord& r) { return r.diverged; }));
  }

  TEST_CASE("W is centred and tracks S at small eta") {
    const Model m = ou();
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const double eta = 0.05;
    const auto recs = run_replications(m, o, s, eta, default_steps(eta), default_burn_in(m, eta),
                                       eta_seed(1, eta), 20000);
    double sw = 0, ss = 0, sww = 0, sss = 0, sws = 0;
    for (const auto& r : recs) {
      sw += r.W;
      ss += r.S;
      sww += r.W * r.W;
      sss += r.S * r.S;
      sws += r.W * r.S;
    }
    const double n = static_cast<double>(recs.size());
    CHECK(std::abs(sw / n) <= 4.0 / std::sqrt(n) * 1.05);
    const double cov = sws / n - sw / n * ss / n;
    const double corr = cov / std::sqrt((sww / n - sw / n * sw / n) * (sss / n - ss / n * ss / n));
    CHECK(corr >= 0.99);
  }

  TEST_CASE("concentration: y_sum is degenerate for a linear observable") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::kConcentration;
    spec.concentration = ConcentrationKind::kYSum;
    spec.eta_list = {0.1};
    spec.n_reps = 1000;
    const ExperimentResult r = run_experiment(spec);
    REQUIRE_FALSE(r.concentration.empty());
    for (const auto& row : r.concentration) {
      CHECK(row.exceed == 0);
      CHECK(row.p_hat == 0.0);
    }
  }

  TEST_CASE("concentration: drift_sum mean and decay") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::kConcentration;
    spec.concentration = ConcentrationKind::kDriftSum;
    spec.eta_list = {0.05};
    spec.n_reps = 10000;
    const Model m = ou();
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const auto recs = run_replications(m, o, s, 0.05, 400, default_burn_in(m, 0.05), eta_seed(1, 0.05), 10000);
    double sum = 0, sum2 = 0;
    for (const auto& r : recs) {
      sum += r.drift_sum;
      sum2 += r.drift_sum * r.drift_sum;
    }
    const double n = static_cast<double>(recs.size());
    const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
    // eta m E[theta^2] with the stationary EM variance 1/(2 - eta).
    CHECK(std::abs(mean - 0.05 * 400 / 1.95) <= 4 * se);
    const ExperimentResult r = run_experiment(spec);
    REQUIRE(r.fits.size() == 1);
    CHECK(r.fits[0].dominated);
    CHECK(r.fits[0].constants.at("c3") > 0.0);
  }

  TEST_CASE("concentration fits dominate what they were fitted to") {
    const auto s = normal_sample(5000, 9);
    std::vector<double> v;
    for (double x : s) v.push_back(std::abs(x) * 3);
    std::vector<double> ys;
    for (int j = 1; j <= 10; ++j) ys.push_back(0.8 * j);
    for (const auto& res : {fit_y_sum(v, ys, 10, 0.1), fit_psi_sum(v, ys, 10, 0.1), fit_drift_sum(v, ys, 0.1)}) {
      CAPTURE(res.fit.check);
      CHECK(res.fit.dominated);
      for (const auto& row : res.rows) CHECK_FALSE(row.violation);
    }
    // A heavy tail cannot be held under the sub-Gaussian shape with c > 0
    // while keeping the light cells: the psi fit still exists, but
    // a tail that does not decay at all defeats the drift fit.
    const std::vector<double> flat(5000, 100.0);
    CHECK_FALSE(fit_drift_sum(flat, ys, 0.1).fit.dominated);
  }

  TEST_CASE("u_n by quadrature against a trapezoid oracle") {
    auto trap = [](auto f, double a, double b, int n) {
      const double h = (b - a) / n;
      double s = 0.5 * (f(a) + f(b));
      for (int i = 1; i < n; ++i) s += f(a + i * h);
      return s * h;
    };
    const double c = 0.25;
    const double exp_oracle =
        trap([&](double z) { return z * z * std::exp(c * std::abs(z) - (z + 1)); }, -1.0, 80.0, 400000);
    CHECK(lm21_u_n(Lm21Generator::kCenteredExponential, 1.0, c, 1) == doctest::Approx(exp_oracle).epsilon(1e-8));
    const double sq_oracle = trap(
        [&](double x) {
          const double z = x * x - 1;
          return 2 * z * z * std::exp(c * std::abs(z) - 0.5 * x * x) / std::sqrt(2 * M_PI);
        },
        0.0, 30.0, 400000);
    CHECK(lm21_u_n(Lm21Generator::kGaussianSquare, 1.0, c, 1) == doctest::Approx(sq_oracle).epsilon(1e-8));
    CHECK(lm21_u_n(Lm21Generator::kBounded, 1.0, c, 1000) == doctest::Approx(1000 * std::exp(c)));
    CHECK(lm21_u_n(Lm21Generator::kCenteredExponential, 0.5, c, 10) > 10.0);
    CHECK_THROWS_AS(lm21_u_n(Lm21Generator::kCenteredExponential, 1.0, 1.0, 1), DomainError);
    CHECK_THROWS_AS(lm21_u_n(Lm21Generator::kGaussianSquare, 1.0, 0.5, 1), DomainError);
  }

  TEST_CASE("martingale falsifier") {
    for (auto g : {Lm21Generator::kBounded, Lm21Generator::kCenteredExponential, Lm21Generator::kGaussianSquare}) {
      Lm21Spec spec;
      spec.generator = g;
      spec.x_grid = {0.0, 0.5, 1.0, 2.0, 3.0};
      const ConcentrationResult r = lm21_falsifier(spec, 2000, 3);
      CAPTURE(to_string(g));
      CHECK(r.fit.dominated);
      CHECK(r.rows.front().bound >= 1.0);
      CHECK(r.rows.front().p_hat <= 1.0);
      for (const auto& row : r.rows) CHECK_FALSE(row.violation);
    }
    // Bounded differences sit under the Gaussian branch of the two-branch bound.
    Lm21Spec b;
    b.generator = Lm21Generator::kBounded;
    const ConcentrationResult r = lm21_falsifier(b, 2000, 4);
    for (const auto& row : r.rows) CHECK(row.p_hat <= row.reference);
  }

  TEST_CASE("experiments are reproducible") {
    ExperimentSpec spec;
    spec.eta_list = {0.2};
    spec.n_reps = 100;
    const std::string a = result_to_json(run_experiment(spec, {1})).dump();
    const std::string b = result_to_json(run_experiment(spec, {3})).dump();
    CHECK(a == b);
    const ExperimentResult r = run_experiment(spec);
    REQUIRE(r.samples.size() == 1);
    CHECK(r.samples[0].W.size() == 100);
    CHECK(std::is_sorted(r.samples[0].W.begin(), r.samples[0].W.end()));
  }
}
