#include "mdev/models.hpp"

#include "mdev/linalg.hpp"
#include "mdev/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdev {

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  const int d = spec_.dim;
  if (d < 1 || d > kMaxDim) {
    throw ModelError("model '" + spec_.id + "': dimension must be in [1, " +
                     std::to_string(kMaxDim) + "]");
  }
  if (!spec_.drift) {
    throw ModelError("model '" + spec_.id + "': missing drift");
  }
  if (spec_.sigma.rows() != d || spec_.sigma.cols() != d) {
    throw ModelError("model '" + spec_.id + "': sigma must be d x d");
  }
  if (!(std::abs(spec_.sigma.determinant()) > 1e-12)) {
    throw ModelError("model '" + spec_.id + "': sigma is not invertible (|det| <= 1e-12)");
  }
  if (!(spec_.lipschitz_L > 0.0) || !(spec_.K1 > 0.0) || !(spec_.K2 >= 0.0)) {
    throw ModelError("model '" + spec_.id + "': need L > 0, K1 > 0, K2 >= 0");
  }
  if (spec_.drift_second_1d && d != 1) {
    throw ModelError("model '" + spec_.id + "': drift_second_1d requires d = 1");
  }
  ssT_ = spec_.sigma * spec_.sigma.transpose();
}

Vector Model::drift(const Vector& x) const {
  Vector out(dim());
  spec_.drift({x.data(), static_cast<std::size_t>(x.size())},
              {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Matrix Model::jacobian(const Vector& x) const {
  if (!spec_.jacobian) {
    throw ModelError("model '" + spec_.id + "': no drift jacobian");
  }
  Matrix J(dim(), dim());
  (*spec_.jacobian)({x.data(), static_cast<std::size_t>(x.size())},
                    {J.data(), static_cast<std::size_t>(J.size())});
  return J;
}

double Model::drift_1d(double x) const {
  double out = 0.0;
  spec_.drift({&x, 1}, {&out, 1});
  return out;
}

double Model::drift_prime_1d(double x) const {
  if (!spec_.jacobian) {
    throw ModelError("model '" + spec_.id + "': no drift jacobian");
  }
  double out = 0.0;
  (*spec_.jacobian)({&x, 1}, {&out, 1});
  return out;
}

double Model::drift_second_1d(double x) const {
  if (!spec_.drift_second_1d) {
    throw ModelError("model '" + spec_.id + "': no drift second derivative");
  }
  return (*spec_.drift_second_1d)(x);
}

Model Model::with_constants(double L, double K1, double K2) const {
  ModelSpec s = spec_;
  s.lipschitz_L = L;
  s.K1 = K1;
  s.K2 = K2;
  return Model(std::move(s));
}

Model make_linear_model(const Matrix& A, const Matrix& sigma, std::string id) {
  const auto d = A.rows();
  if (A.cols() != d || sigma.rows() != d || sigma.cols() != d) {
    throw ModelError("linear model: A and sigma must be square of equal size");
  }
  if (!(std::abs(sigma.determinant()) > 1e-12)) {
    throw ModelError("linear model: sigma is not invertible (|det| <= 1e-12)");
  }
  const double lam = min_sym_eigenvalue(A);
  if (!(lam > 0.0)) {
    std::ostringstream os;
    os << "linear model: symmetric part of A is not positive definite "
          "(smallest eigenvalue "
       << lam << ")";
    throw ModelError(os.str());
  }
  const Matrix Q = sigma * sigma.transpose();
  Matrix cov = solve_lyapunov(A, Q);
  cov = 0.5 * (cov + cov.transpose());

  AnalyticFacts facts;
  facts.linear_drift_matrix = A;
  facts.stationary_covariance = cov;
  facts.invariant_mean_of["x"] = 0.0;
  facts.invariant_mean_of["x2"] = cov.trace();

  ModelSpec spec;
  spec.id = std::move(id);
  spec.dim = static_cast<int>(d);
  spec.drift = [A](std::span<const double> x, std::span<double> out) {
    mut_view(out).noalias() = -A * view(x);
  };
  spec.jacobian = [A](std::span<const double>, std::span<double> out) {
    Eigen::Map<Matrix>(out.data(), A.rows(), A.cols()) = -A;
  };
  if (d == 1) {
    spec.drift_second_1d = [](double) { return 0.0; };
  }
  spec.sigma = sigma;
  spec.lipschitz_L = operator_norm(A);
  spec.K1 = lam;
  spec.K2 = lam;
  spec.analytic = std::move(facts);
  return Model(std::move(spec));
}

Model make_tanh_model(double c) {
  if (!(c >= 0.0 && c < 1.0)) {
    throw ModelError("tanh model: c must lie in [0, 1)");
  }
  ModelSpec spec;
  spec.id = "tanh";
  spec.dim = 1;
  spec.drift = [c](std::span<const double> x, std::span<double> out) {
    out[0] = -x[0] + c * std::tanh(x[0]);
  };
  spec.jacobian = [c](std::span<const double> x, std::span<double> out) {
    const double t = std::tanh(x[0]);
    out[0] = -1.0 + c * (1.0 - t * t);
  };
  spec.drift_second_1d = [c](double x) {
    const double t = std::tanh(x);
    return -2.0 * c * t * (1.0 - t * t);
  };
  spec.sigma = Matrix::Identity(1, 1);
  spec.lipschitz_L = 1.0 + c;
  spec.K1 = 1.0 - c;
  spec.K2 = 1.0 - c;

  AnalyticFacts facts;
  facts.invariant_mean_of["x"] = 0.0;  // odd drift, symmetric density
  if (c == 0.0) {
    facts.linear_drift_matrix = Matrix::Identity(1, 1);
    facts.stationary_covariance = Matrix::Constant(1, 1, 0.5);
    facts.invariant_mean_of["x2"] = 0.5;
  }
  spec.analytic = std::move(facts);
  return Model(std::move(spec));
}

double dissipativity_margin(const Model& model, const Vector& x, const Vector& y) {
  const Vector delta = x - y;
  const Vector dg = model.drift(x) - model.drift(y);
  return -model.K1() * delta.norm() + model.K2() - dg.dot(delta);
}

namespace {

// Uniform point in the d-ball of the given radius, addressed by (pair, slot).
Vector ball_point(const CounterRng& rng, std::int64_t pair, std::uint32_t slot, int d,
                  double radius) {
  Vector v(d);
  for (int i = 0; i < d; ++i) {
    v(i) = rng.normal(static_cast<std::uint64_t>(pair), slot, static_cast<std::uint32_t>(i));
  }
  const double n = v.norm();
  const double u = rng.uniform(static_cast<std::uint64_t>(pair), slot, 0xFFFFu);
  const double r = radius * std::pow(u, 1.0 / d);
  return n > 0 ? Vector(v * (r / n)) : Vector::Zero(d);
}

template <typename F>
double min_over_pairs(const Model& model, std::int64_t n_pairs, double radius,
                      std::uint64_t seed, F&& margin) {
  if (n_pairs < 1 || !(radius > 0.0)) {
    throw DomainError("pair check: need n_pairs >= 1 and radius > 0");
  }
  const CounterRng rng(seed, static_cast<std::uint32_t>(Stream::kDiagnostics));
  double worst = std::numeric_limits<double>::infinity();
  for (std::int64_t p = 0; p < n_pairs; ++p) {
    const Vector x = ball_point(rng, p, 0, model.dim(), radius);
    const Vector y = ball_point(rng, p, 1, model.dim(), radius);
    worst = std::min(worst, margin(x, y));
  }
  return worst;
}

}  // namespace

double check_dissipativity(const Model& model, std::int64_t n_pairs, double radius,
                           std::uint64_t seed) {
  return min_over_pairs(model, n_pairs, radius, seed, [&](const Vector& x, const Vector& y) {
    return dissipativity_margin(model, x, y);
  });
}

double check_lipschitz(const Model& model, std::int64_t n_pairs, double radius,
                       std::uint64_t seed) {
  return min_over_pairs(model, n_pairs, radius, seed, [&](const Vector& x, const Vector& y) {
    return model.lipschitz_L() * (x - y).norm() - (model.drift(x) - model.drift(y)).norm();
  });
}

}  // namespace mdev
