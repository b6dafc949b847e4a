#include "doctest.h"
#include "helpers.hpp"
#include "mdev/integrator.hpp"

#include <cmath>

using namespace mdev;
using testing::ou;
using testing::vec;

TEST_SUITE("integrator") {
  TEST_CASE("em_step examples") {
    ModelSpec zero;
    zero.id = "zero";
    zero.dim = 2;
    zero.drift = [](std::span<const double>, std::span<double> out) { out[0] = out[1] = 0.0; };
    zero.sigma = Matrix::Identity(2, 2);
    zero.lipschitz_L = 1.0;
    zero.K1 = 1.0;
    const Model z(zero);
    CHECK((em_step(vec({3, -1}), 0.1, z, vec({0, 0})) - vec({3, -1})).norm() == 0.0);
    CHECK(em_step(vec({1}), 0.01, ou(), vec({0}))(0) == doctest::Approx(0.99).epsilon(1e-15));
    CHECK(em_step(vec({0}), 0.25, ou(), vec({0.4}))(0) == doctest::Approx(0.2).epsilon(1e-15));
  }

  TEST_CASE("hand trajectory with forced noise") {
    const std::vector<double> xi{0.4, -0.2};
    const Trajectory t = simulate_with_noise(ou(), 0.25, vec({0}), xi);
    REQUIRE(t.m == 2);
    CHECK(t.state(0)[0] == 0.0);
    CHECK(t.state(1)[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(t.state(2)[0] == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(t.noise(1)[0] == -0.2);
  }

  TEST_CASE("states reconstruct exactly from recorded noise") {
    Matrix A(2, 2);
    A << 1.0, 0.3, -0.2, 1.5;
    Matrix s(2, 2);
    s << 1.0, 0.0, 0.4, 0.8;
    const Model m = make_linear_model(A, s);
    const Trajectory t = simulate(m, 0.1, 50, 20, 5, 2);
    for (std::int64_t k = 0; k < t.m; ++k) {
      std::vector<double> next(2);
      em_step(m, t.eta, t.state(k), t.noise(k), next, k);
      CHECK(next[0] == t.state(k + 1)[0]);
      CHECK(next[1] == t.state(k + 1)[1]);
    }
    // Recorded noise is the raw draw at step index burn_in + k.
    CHECK(t.noise(0)[1] == noise_value(5, 2, 20, 1));
    CHECK(t.noise(7)[0] == noise_value(5, 2, 27, 0));
    const Trajectory again = simulate_with_noise(m, 0.1, Vector::Map(t.states.data(), 2), t.noises);
    CHECK(again.states == t.states);
  }

  TEST_CASE("simulate is deterministic") {
    const Trajectory a = simulate(ou(), 0.2, 1, 10, 9, 4);
    const Trajectory b = simulate(ou(), 0.2, 1, 10, 9, 4);
    CHECK(a.states == b.states);
    CHECK(a.noises == b.noises);
    CHECK(simulate(ou(), 0.2, 1, 10, 9, 5).states != a.states);
  }

  TEST_CASE("default step counts and burn-in") {
    CHECK(default_steps(0.2) == 25);
    CHECK(default_steps(0.1) == 100);
    CHECK(default_steps(0.05) == 400);
    CHECK(default_steps(0.02) == 2500);
    CHECK(default_steps(0.3) == 11);
    CHECK(default_burn_in(ou(), 0.1) == 100);
    CHECK(default_burn_in(ou(2.0), 0.1) == 50);
  }

  TEST_CASE("stationary variance of the EM chain") {
    const double eta = 0.01;
    const std::int64_t m = 1000000;
    const Trajectory t = simulate(ou(), eta, m, 10000, 17, 0);
    double s = 0, s2 = 0;
    for (std::int64_t k = 0; k < m; ++k) {
      const double x = t.state(k)[0];
      s += x;
      s2 += x * x;
    }
    const double var = s2 / m - (s / m) * (s / m);
    const double target = 1.0 / (2.0 - eta);
    // AR(1) with rho = 1 - eta: Var(sample variance) ~ 2 v^2 (1 + rho^2) / ((1 - rho^2) m).
    const double rho = 1.0 - eta;
    const double se = std::sqrt(2.0 * target * target * (1 + rho * rho) / ((1 - rho * rho) * m));
    CHECK(std::abs(var - target) < 3.0 * se);
  }

  TEST_CASE("exact OU transition") {
    const Matrix A = Matrix::Identity(1, 1), s = Matrix::Identity(1, 1);
    CHECK(ou_exact_step(vec({2}), A, s, 0.5, vec({0}))(0) == doctest::Approx(2 * std::exp(-0.5)).epsilon(1e-15));
    CHECK(ou_exact_step(vec({2}), A, s, 0.5, vec({0}))(0) == doctest::Approx(1.2130613).epsilon(1e-7));
    // Increment sd: sqrt((1 - e^{-1})/2).
    const double sd = ou_exact_step(vec({0}), A, s, 0.5, vec({1}))(0);
    CHECK(sd * sd == doctest::Approx(0.3160603).epsilon(1e-6));
    CHECK(ou_exact_step(vec({5}), A, s, 50.0, vec({0.7}))(0) == doctest::Approx(0.7 * std::sqrt(0.5)).epsilon(1e-12));
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(simulate(ou(), 1.0, 10, 0, 1, 0), DomainError);
    CHECK_THROWS_AS(simulate(ou(), 0.0, 10, 0, 1, 0), DomainError);
    CHECK_THROWS_AS(simulate(ou(), 0.1, 0, 0, 1, 0), DomainError);
    CHECK_THROWS_AS(simulate(ou(), 0.1, 10, -1, 1, 0), DomainError);
    // |1 - eta a| = 24: the chain explodes within a few dozen steps.
    try {
      simulate(ou(50.0), 0.5, 200, 0, 1, 0);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.step() > 0);
      CHECK(e.step() < 200);
    }
  }
}
