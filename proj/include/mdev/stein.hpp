#pragma once

#include "mdev/models.hpp"

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mdev {

using ScalarField = std::function<double(std::span<const double>)>;
/// Writes a flattened derivative (d, d*d, d^3 or d^4 values, column-major).
using TensorField = std::function<void(std::span<const double>, std::span<double>)>;

/// A test function h together with whatever structure the solvers can use.
struct Observable {
  std::string id;
  int dim = 1;
  ScalarField h;
  // 1D derivatives, required by the quadrature solver.
  std::optional<ScalarFn> h_prime;
  std::optional<ScalarFn> h_second;
  // Polynomial forms: h(x) = <v, x> or h(x) = x^T M x.
  std::optional<Vector> linear;
  std::optional<Matrix> quadratic;

  double operator()(std::span<const double> x) const { return h(x); }
};

Observable make_linear_observable(const Vector& v, std::string id = "linear");
Observable make_quadratic_observable(const Matrix& M, std::string id = "quadratic");
/// h(x) = tanh(x) in 1D; bounded with bounded derivatives.
Observable make_tanh_observable();
/// "x" -> <e1, x>, "x2" -> |x|^2, "tanh" -> tanh(x) (d = 1 only).
Observable observable_by_id(const std::string& id, int dim);

/// Solution phi of A phi = h - pi(h) with derivatives up to order four.
struct SteinSolution {
  std::string method;
  int dim = 1;
  ScalarField phi;
  TensorField grad;
  TensorField hess;
  TensorField third;   // may be empty
  TensorField fourth;  // may be empty
  // 1 or 2 when phi is a polynomial of that degree (all higher derivatives
  // vanish identically); -1 otherwise.
  int polynomial_degree = -1;
  double pi_h = 0.0;
  double tolerance = 1e-12;
  double residual_sup = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 5> derivative_bounds{
      std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
      std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
      std::numeric_limits<double>::quiet_NaN()};
  // Quadrature only: sup of the generator residual with phi'' taken by a
  // five-point difference of the gridded phi', independent of the recursion.
  double construction_residual = std::numeric_limits<double>::quiet_NaN();
  // Region where the solution is trusted (1D quadrature only).
  std::optional<std::pair<double, double>> trusted;

  bool has_third() const { return static_cast<bool>(third); }
  bool has_fourth() const { return static_cast<bool>(fourth); }

  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;
};

/// <g(x), grad phi(x)> + 1/2 <sigma sigma^T, hess phi(x)>_HS
double apply_generator(const SteinSolution& sol, const Model& model, std::span<const double> x);
double apply_generator(const SteinSolution& sol, const Model& model, const Vector& x);

/// h(x) = <v, x> under g(x) = -A x: phi(x) = -<A^{-T} v, x>, pi(h) = 0.
SteinSolution stein_linear_h(const Matrix& A, const Matrix& sigma, const Vector& v);

/// h(x) = x^T M x under g(x) = -A x: phi(x) = x^T Q x with A^T Q + Q A = -M,
/// pi(h) = -tr(sigma sigma^T Q).
SteinSolution stein_quadratic_h(const Matrix& A, const Matrix& sigma, const Matrix& M);

struct QuadratureOptions {
  std::optional<std::pair<double, double>> domain;  // default: mode +- 10 scale
  int n_nodes = 8001;
  double tolerance = 1e-6;
  // Fraction of the domain (centered) that is certified and trusted.
  double trusted_fraction = 0.8;
};

/// Composite-Simpson solver for the 1D Stein equation. phi' = u solves
/// (sigma^2/2) u' + g u = h - pi(h), obtained by sweeping the integrating
/// factor inward from both domain edges toward the density mode.
SteinSolution stein_1d_quadrature(const Model& model, const Observable& obs,
                                  const QuadratureOptions& opts = {});

struct CertReport {
  double residual_sup = 0.0;
  // 1D numeric solutions: the part of residual_sup computed with a
  // difference quotient of phi' in place of phi''.
  double fd_residual_sup = 0.0;
  std::vector<double> worst_point;
  std::array<double, 5> derivative_bounds{};
  double tolerance = 0.0;
  bool passed = false;
};

/// Sup over the grid of |A phi - (h - pi(h))| and of |nabla^k phi|.
/// Records the result in `sol`; does not throw on a breach.
CertReport certify(SteinSolution& sol, const Model& model, const Observable& obs,
                   const std::vector<Vector>& grid, double tol);

/// Throws CertificationError when the report did not pass.
void require_certified(const CertReport& report);

/// Certification grid: n uniform points on the trusted interval in 1D, or
/// n deterministic uniform points in [-half_width, half_width]^d plus the origin.
std::vector<Vector> certification_grid(const SteinSolution& sol, int n, double half_width);

/// Analytic solution when the model is linear and h is a polynomial of degree
/// <= 2, the 1D quadrature solver otherwise.
SteinSolution solve_stein(const Model& model, const Observable& obs,
                          const QuadratureOptions& opts = {});

}  // namespace mdev
