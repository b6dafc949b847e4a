#pragma once

#include "mdev/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace mdev {

/// Drift g: R^d -> R^d written into `out` (size d). Must be reentrant.
using DriftFn = std::function<void(std::span<const double> x, std::span<double> out)>;
/// Jacobian of g, column-major d x d into `out`.
using JacobianFn = std::function<void(std::span<const double> x, std::span<double> out)>;
using ScalarFn = std::function<double(double)>;

/// Closed-form facts about a model, used as oracles.
struct AnalyticFacts {
  std::optional<Matrix> linear_drift_matrix;  // g(x) = -A x
  std::map<std::string, double> invariant_mean_of;
  std::optional<Matrix> stationary_covariance;
};

struct ModelSpec {
  std::string id;
  int dim = 1;
  DriftFn drift;
  std::optional<JacobianFn> jacobian;
  // 1D only: g''. Needed for the fourth derivative of 1D Stein solutions.
  std::optional<ScalarFn> drift_second_1d;
  Matrix sigma;
  double lipschitz_L = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  std::optional<AnalyticFacts> analytic;
};

/// An SDE dX = g(X) dt + sigma dB with additive noise. Immutable once built.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const std::string& id() const { return spec_.id; }
  int dim() const { return spec_.dim; }
  const Matrix& sigma() const { return spec_.sigma; }
  const Matrix& sigma_sigma_t() const { return ssT_; }
  double lipschitz_L() const { return spec_.lipschitz_L; }
  double K1() const { return spec_.K1; }
  double K2() const { return spec_.K2; }
  const std::optional<AnalyticFacts>& analytic() const { return spec_.analytic; }
  bool has_jacobian() const { return spec_.jacobian.has_value(); }
  bool has_drift_second_1d() const { return spec_.drift_second_1d.has_value(); }

  void drift(std::span<const double> x, std::span<double> out) const { spec_.drift(x, out); }
  Vector drift(const Vector& x) const;
  Matrix jacobian(const Vector& x) const;

  // Scalar conveniences for d = 1.
  double drift_1d(double x) const;
  double drift_prime_1d(double x) const;
  double drift_second_1d(double x) const;

  /// Returns a copy with replaced dissipativity constants (diagnostics only).
  Model with_constants(double L, double K1, double K2) const;

 private:
  ModelSpec spec_;
  Matrix ssT_;
};

/// g(x) = -A x. Requires sym(A) positive definite and sigma invertible.
/// K1 = K2 = lambda_min(sym A) translates the squared dissipativity
/// <g(x)-g(y), x-y> <= -lambda |x-y|^2 into the unsquared norm form.
Model make_linear_model(const Matrix& A, const Matrix& sigma, std::string id = "ou-matrix");

/// 1D g(x) = -x + c tanh(x), sigma = 1, c in [0, 1).
Model make_tanh_model(double c);

/// -K1 |x-y| + K2 - <g(x)-g(y), x-y> for a single pair.
double dissipativity_margin(const Model& model, const Vector& x, const Vector& y);

/// Minimum dissipativity margin over random pairs in the radius ball.
/// Nonnegative means the declared (K1, K2) held on every sampled pair.
double check_dissipativity(const Model& model, std::int64_t n_pairs, double radius,
                           std::uint64_t seed);

/// Minimum of L |x-y| - |g(x)-g(y)| over random pairs in the radius ball.
double check_lipschitz(const Model& model, std::int64_t n_pairs, double radius,
                       std::uint64_t seed);

}  // namespace mdev
