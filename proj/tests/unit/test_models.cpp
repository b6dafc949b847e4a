#include "doctest.h"
#include "helpers.hpp"
#include "mdev/linalg.hpp"
#include "mdev/models.hpp"

#include <cmath>

using namespace mdev;
using testing::ou;
using testing::vec;

TEST_SUITE("models") {
  TEST_CASE("stationary covariance of linear models") {
    CHECK(ou(1, 1).analytic()->stationary_covariance->coeff(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ou(2, 1).analytic()->stationary_covariance->coeff(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    const Model m2 = make_linear_model(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    const Matrix S = *m2.analytic()->stationary_covariance;
    CHECK((S - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-14);
  }

  TEST_CASE("stationary covariance solves the Lyapunov equation for a non-normal drift") {
    Matrix A(2, 2);
    A << 1.0, 0.5, 0.0, 2.0;
    Matrix s(2, 2);
    s << 1.0, 0.0, 0.3, 1.0;
    const Model m = make_linear_model(A, s);
    const Matrix S = *m.analytic()->stationary_covariance;
    CHECK((A * S + S * A.transpose() - s * s.transpose()).norm() < 1e-13);
    CHECK((S - S.transpose()).norm() < 1e-15);
    CHECK(m.K1() == doctest::Approx(min_sym_eigenvalue(A)));
    CHECK(m.lipschitz_L() == doctest::Approx(operator_norm(A)));
  }

  TEST_CASE("tanh drift values") {
    const Model t = make_tanh_model(0.5);
    CHECK(t.drift_1d(0.0) == 0.0);
    CHECK(t.drift_1d(1.0) == doctest::Approx(-1.0 + 0.5 * std::tanh(1.0)).epsilon(1e-15));
    CHECK(t.drift_1d(1.0) == doctest::Approx(-0.6192029).epsilon(1e-6));
    CHECK(t.K1() == doctest::Approx(0.5));
    // Derivatives against central differences.
    for (double x : {-2.0, -0.3, 0.7, 3.0}) {
      const double h = 1e-5;
      CHECK(t.drift_prime_1d(x) == doctest::Approx((t.drift_1d(x + h) - t.drift_1d(x - h)) / (2 * h)).epsilon(1e-8));
      CHECK(t.drift_second_1d(x) ==
            doctest::Approx((t.drift_prime_1d(x + h) - t.drift_prime_1d(x - h)) / (2 * h)).epsilon(1e-6));
    }
  }

  TEST_CASE("tanh with c = 0 is the unit OU model") {
    const Model t = make_tanh_model(0.0);
    const Model o = ou(1, 1);
    for (double x : {-3.0, -0.5, 0.0, 1.25}) CHECK(t.drift_1d(x) == o.drift_1d(x));
    CHECK(t.K1() == o.K1());
    CHECK(t.lipschitz_L() == o.lipschitz_L());
  }

  TEST_CASE("dissipativity examples") {
    CHECK(check_dissipativity(ou(1, 1), 2000, 5.0, 3) >= 0.0);
    const Model t = make_tanh_model(0.5);
    CHECK(check_dissipativity(t, 2000, 5.0, 3) >= 0.0);
    CHECK(check_lipschitz(t, 2000, 5.0, 3) >= -1e-12);

    ModelSpec zero;
    zero.id = "zero";
    zero.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    zero.sigma = Matrix::Identity(1, 1);
    zero.lipschitz_L = 1.0;
    zero.K1 = 1.0;
    zero.K2 = 0.0;
    const Model z(zero);
    CHECK(dissipativity_margin(z, vec({0.0}), vec({2.0})) == doctest::Approx(-2.0));
    CHECK(check_dissipativity(z, 100, 3.0, 1) < 0.0);
  }

  TEST_CASE("invalid models are rejected") {
    CHECK_THROWS_AS(make_linear_model(Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)), ModelError);
    CHECK_THROWS_AS(make_linear_model(Matrix::Constant(1, 1, -1.0), Matrix::Identity(1, 1)), ModelError);
    CHECK_THROWS_AS(make_linear_model(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Error);
    CHECK_THROWS_AS(make_linear_model(Matrix::Identity(11, 11), Matrix::Identity(11, 11)), Error);
    CHECK_THROWS_AS(make_tanh_model(1.0), Error);
    CHECK_THROWS_AS(make_tanh_model(-0.1), Error);
    ModelSpec bad;
    bad.id = "bad";
    bad.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    bad.sigma = Matrix::Identity(1, 1);
    bad.lipschitz_L = 1.0;
    bad.K1 = 0.0;
    CHECK_THROWS_AS(Model{bad}, ModelError);
  }

  TEST_CASE("linear algebra helpers") {
    Matrix A(2, 2), B(2, 2), X(2, 2);
    A << 3, 1, 0, 2;
    B << 1, 0, 2, 4;
    X << 1, -2, 0.5, 3;
    const Matrix C = A * X + X * B;
    CHECK((solve_sylvester(A, B, C) - X).norm() < 1e-12);
    // A and -A share no eigenvalues only when A has none on the imaginary axis.
    Matrix S(1, 1);
    S << 0.0;
    CHECK_THROWS_AS(solve_sylvester(S, S, Matrix::Identity(1, 1)), ModelError);
  }
}
