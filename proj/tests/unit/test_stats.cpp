#include "doctest.h"
#include "helpers.hpp"
#include "mdev/harness.hpp"
#include "mdev/stats.hpp"

#include <cmath>

using namespace mdev;
using testing::hand_trajectory;
using testing::ou;
using testing::vec;

namespace {

const Matrix I1 = Matrix::Identity(1, 1);

SteinSolution lin_sol() { return stein_linear_h(I1, I1, vec({1})); }          // grad = -1
SteinSolution quad_sol() { return stein_quadratic_h(I1, I1, I1); }            // grad = -x

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("pi_hat excludes the final state") {
    const Observable x = observable_by_id("x", 1);
    CHECK(compute_pi_hat(hand_trajectory(0.1, {0.2, -0.4, 0.6, 99.0}), x) == doctest::Approx(0.4 / 3));
    CHECK(compute_pi_hat(hand_trajectory(0.1, {1, 2, 99}), observable_by_id("x2", 1)) == doctest::Approx(2.5));
    Observable seven;
    seven.h = [](std::span<const double>) { return 7.0; };
    CHECK(compute_pi_hat(hand_trajectory(0.1, {1, 2, 3}), seven) == 7.0);
  }

  TEST_CASE("Y examples") {
    CHECK(compute_Y(hand_trajectory(0.1, {0.3, -5, 2, 1}), lin_sol(), I1) == doctest::Approx(1.0));
    CHECK(compute_Y(hand_trajectory(0.1, {1, 2, 99}), quad_sol(), I1) == doctest::Approx(2.5));
    const Matrix s = 2.0 * Matrix::Identity(2, 2);
    const SteinSolution e1 = stein_linear_h(Matrix::Identity(2, 2), s, vec({-1, 0}));  // grad = (1, 0)
    Trajectory t;
    t.eta = 0.1;
    t.dim = 2;
    t.m = 2;
    t.states = {0.1, 0.2, -1, 3, 5, 5};
    t.noises = {0, 0, 0, 0};
    CHECK(compute_Y(t, e1, s) == doctest::Approx(4.0));
  }

  TEST_CASE("V examples") {
    const Trajectory t = hand_trajectory(0.25, {0, 0.2, 0.05}, {0.4, -0.2});
    CHECK(compute_V(t, lin_sol(), ou()) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(compute_V_noise_form(t, lin_sol(), I1) == doctest::Approx(0.10).epsilon(1e-12));
    // Zero noise: each increment is exactly the drift step.
    const Trajectory z = simulate_with_noise(ou(), 0.25, vec({1.0}), std::vector<double>{0, 0, 0});
    CHECK(compute_V(z, lin_sol(), ou()) == 0.0);
  }

  TEST_CASE("V agrees with its noise form on simulated paths") {
    const Model m = make_tanh_model(0.5);
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    for (std::uint64_t r = 0; r < 5; ++r) {
      const Trajectory t = simulate(m, 0.1, 100, 50, 3, r);
      const double v = compute_V(t, s, m);
      CHECK(std::abs(v - compute_V_noise_form(t, s, m.sigma())) <= 1e-12 * std::max(1.0, v));
    }
  }

  TEST_CASE("W and S on the hand trajectory") {
    const Trajectory t = hand_trajectory(0.25, {0, 0.2, 0.05}, {0.4, -0.2});
    const NormalizedPair p = compute_W_S(t, lin_sol(), ou(), observable_by_id("x", 1), 0.0);
    CHECK(p.W == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.S == doctest::Approx(0.6324555).epsilon(1e-7));
    const Trajectory flat = hand_trajectory(0.25, {0, 0, 0}, {0.4, -0.2});
    CHECK(compute_W(flat, lin_sol(), ou(), observable_by_id("x", 1), 0.0) == 0.0);
    // V vanishes on the flat path, so the pair is not defined.
    CHECK_THROWS_AS(compute_W_S(flat, lin_sol(), ou(), observable_by_id("x", 1), 0.0), DomainError);
  }

  TEST_CASE("degenerate denominators raise") {
    // grad phi = -x vanishes on the zero path: Y = 0.
    const Trajectory flat = hand_trajectory(0.25, {0, 0, 0}, {0.0, 0.0});
    CHECK_THROWS_AS(compute_W_S(flat, quad_sol(), ou(), observable_by_id("x2", 1), 0.5), DomainError);
    // Y = 1 but V = 0 with zero noise.
    const Trajectory quiet = simulate_with_noise(ou(), 0.25, vec({1.0}), std::vector<double>{0, 0});
    CHECK_THROWS_AS(compute_W_S(quiet, lin_sol(), ou(), observable_by_id("x", 1), 0.0), DomainError);
  }

  TEST_CASE("psi_sum examples") {
    CHECK(compute_psi_sum(hand_trajectory(0.25, {0, 0.2, 0.05}, {0.4, -0.2}), lin_sol(), I1) ==
          doctest::Approx(-1.8));
    CHECK(compute_psi_sum(hand_trajectory(0.25, {0, 0.5, 0.1}, {1, -1}), lin_sol(), I1) == 0.0);
  }

  TEST_CASE("psi_sum has mean zero across replications") {
    const Model m = ou();
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const auto recs = run_replications(m, o, s, 0.1, 100, 100, 11, 10000);
    double sum = 0, sum2 = 0;
    for (const auto& r : recs) {
      sum += r.psi_sum;
      sum2 += r.psi_sum * r.psi_sum;
    }
    const double n = static_cast<double>(recs.size());
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean) <= 4 * se);
  }

  TEST_CASE("decomposition with linear phi") {
    const Model m = ou();
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const double eta = 0.1;
    for (std::uint64_t r = 0; r < 10; ++r) {
      const Trajectory t = simulate(m, eta, 100, 100, 1, r);
      const Decomposition d = decompose(t, s, m, o);
      CHECK(d.residual <= 1e-12);
      for (int k = 1; k < 6; ++k) CHECK(d.R[static_cast<std::size_t>(k)] == 0.0);
      const double phi0 = s.phi(t.state(0)), phim = s.phi(t.state(t.m));
      CHECK(d.R[0] == doctest::Approx(std::sqrt(eta) * (phi0 - phim)).epsilon(1e-12));
    }
  }

  TEST_CASE("decomposition with quadratic phi") {
    const Model m = ou();
    const Observable o = observable_by_id("x2", 1);
    const SteinSolution s = solve_stein(m, o);
    for (std::uint64_t r = 0; r < 10; ++r) {
      const Trajectory t = simulate(m, 0.1, 100, 100, 2, r);
      const Decomposition d = decompose(t, s, m, o);
      CHECK(d.residual <= 1e-10);
      CHECK(d.R[3] == 0.0);
      CHECK(d.R[5] == 0.0);
    }
  }

  TEST_CASE("decomposition with a quadrature solution") {
    const Model m = make_tanh_model(0.5);
    const Observable o = observable_by_id("tanh", 1);
    const SteinSolution s = solve_stein(m, o);
    for (std::uint64_t r = 0; r < 10; ++r) {
      const Trajectory t = simulate(m, 0.2, 25, 100, 3, r);
      const Decomposition d = decompose(t, s, m, o, 16);
      CHECK(d.residual <= 1e-4);
      CHECK(d.quad_order == 16);
    }
    CHECK_THROWS_AS(decompose(simulate(m, 0.2, 25, 0, 3, 0), s, m, o, 2), DomainError);
  }

  TEST_CASE("bundle matches the individual statistics") {
    const Model m = make_tanh_model(0.5);
    const Observable o = observable_by_id("x", 1);
    const SteinSolution s = solve_stein(m, o);
    const Trajectory t = simulate(m, 0.1, 100, 50, 8, 1);
    const StatBundle b = compute_stats(t, s, m, o, {true, 16});
    CHECK(b.pi_hat == doctest::Approx(compute_pi_hat(t, o)).epsilon(1e-13));
    CHECK(b.Y == doctest::Approx(compute_Y(t, s, m.sigma())).epsilon(1e-13));
    CHECK(b.V == doctest::Approx(compute_V(t, s, m)).epsilon(1e-13));
    const NormalizedPair p = compute_W_S(t, s, m, o, s.pi_h);
    CHECK(b.W == doctest::Approx(p.W).epsilon(1e-12));
    CHECK(b.S == doctest::Approx(p.S).epsilon(1e-12));
    CHECK(b.psi_sum == doctest::Approx(compute_psi_sum(t, s, m.sigma())).epsilon(1e-12));
    CHECK(b.drift_sum == doctest::Approx(compute_drift_sum(t, m)).epsilon(1e-13));
    CHECK(b.decomposed);
    CHECK(b.decomposition_residual == decompose(t, s, m, o, 16).residual);
    CHECK(b.Y >= 0.0);
    CHECK(b.V >= 0.0);
  }
}
