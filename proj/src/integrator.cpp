#include "mdev/integrator.hpp"

#include "mdev/linalg.hpp"
#include "mdev/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mdev {

namespace {

void check_eta(double eta) {
  if (!(eta > 0.0 && eta < 1.0)) {
    throw DomainError("step size eta must lie in (0, 1)");
  }
}

std::string describe(std::span<const double> v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << (i ? ", " : "") << v[i];
  }
  os << ')';
  return os.str();
}

}  // namespace

void em_step(const Model& model, double eta, std::span<const double> theta,
             std::span<const double> xi, std::span<double> out, std::int64_t step) {
  const int d = model.dim();
  double g[kMaxDim];
  model.drift(theta, {g, static_cast<std::size_t>(d)});
  const double sq = std::sqrt(eta);
  const Matrix& s = model.sigma();
  bool finite = true;
  for (int i = 0; i < d; ++i) {
    double noise = 0.0;
    for (int j = 0; j < d; ++j) {
      noise += s(i, j) * xi[j];
    }
    out[i] = theta[i] + eta * g[i] + sq * noise;
    finite = finite && std::isfinite(out[i]);
  }
  if (!finite) {
    throw DivergenceError("em_step: non-finite state at step " + std::to_string(step) +
                              " from theta = " + describe(theta),
                          step);
  }
}

Vector em_step(const Vector& theta, double eta, const Model& model, const Vector& xi) {
  check_eta(eta);
  if (theta.size() != model.dim() || xi.size() != model.dim()) {
    throw DomainError("em_step: dimension mismatch");
  }
  Vector out(model.dim());
  em_step(model, eta, {theta.data(), static_cast<std::size_t>(theta.size())},
          {xi.data(), static_cast<std::size_t>(xi.size())},
          {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

double noise_value(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t step,
                   std::uint32_t coord) {
  if (rep_index > 0xFFFFFFFFull) {
    throw DomainError("noise_value: rep_index must fit in 32 bits");
  }
  const CounterRng rng(seed, static_cast<std::uint32_t>(Stream::kEmNoise));
  return rng.normal(step, coord, static_cast<std::uint32_t>(rep_index));
}

std::int64_t default_steps(double eta) {
  check_eta(eta);
  const double inv = 1.0 / (eta * eta);
  return static_cast<std::int64_t>(std::floor(inv * (1.0 + 1e-12)));
}

std::int64_t default_burn_in(const Model& model, double eta) {
  check_eta(eta);
  return static_cast<std::int64_t>(std::ceil(10.0 / (model.K1() * eta) - 1e-9));
}

namespace {

void check_norm(std::span<const double> theta, std::int64_t step) {
  double sq = 0.0;
  for (double v : theta) sq += v * v;
  if (!(std::sqrt(sq) <= kDivergenceNorm)) {
    throw DivergenceError("simulate: trajectory diverged (|theta| > 1e12) at step " +
                              std::to_string(step),
                          step);
  }
}

}  // namespace

Trajectory simulate(const Model& model, double eta, std::int64_t m, std::int64_t burn_in,
                    std::uint64_t seed, std::uint64_t rep_index) {
  check_eta(eta);
  if (m < 1 || burn_in < 0) {
    throw DomainError("simulate: need m >= 1 and burn_in >= 0");
  }
  if (rep_index > 0xFFFFFFFFull) {
    throw DomainError("simulate: rep_index must fit in 32 bits");
  }
  const int d = model.dim();
  const auto ud = static_cast<std::size_t>(d);
  const CounterRng rng(seed, static_cast<std::uint32_t>(Stream::kEmNoise));
  const auto rep = static_cast<std::uint32_t>(rep_index);

  double cur[kMaxDim] = {};
  double next[kMaxDim];
  double xi[kMaxDim];
  for (std::int64_t b = 0; b < burn_in; ++b) {
    for (int i = 0; i < d; ++i) {
      xi[i] = rng.normal(static_cast<std::uint64_t>(b), static_cast<std::uint32_t>(i), rep);
    }
    em_step(model, eta, {cur, ud}, {xi, ud}, {next, ud}, b - burn_in);
    check_norm({next, ud}, b - burn_in);
    std::copy(next, next + d, cur);
  }

  Trajectory t;
  t.eta = eta;
  t.m = m;
  t.dim = d;
  t.seed = seed;
  t.rep_index = rep_index;
  t.burn_in = burn_in;
  t.states.resize(static_cast<std::size_t>((m + 1) * d));
  t.noises.resize(static_cast<std::size_t>(m * d));
  std::copy(cur, cur + d, t.states.begin());
  for (std::int64_t k = 0; k < m; ++k) {
    double* xk = t.noises.data() + k * d;
    const auto step = static_cast<std::uint64_t>(burn_in + k);
    for (int i = 0; i < d; ++i) {
      xk[i] = rng.normal(step, static_cast<std::uint32_t>(i), rep);
    }
    std::span<double> out{t.states.data() + (k + 1) * d, ud};
    em_step(model, eta, t.state(k), {xk, ud}, out, k);
    check_norm(out, k + 1);
  }
  return t;
}

Trajectory simulate_with_noise(const Model& model, double eta, const Vector& theta0,
                               std::span<const double> noises) {
  check_eta(eta);
  const int d = model.dim();
  if (theta0.size() != d || noises.empty() || noises.size() % static_cast<std::size_t>(d)) {
    throw DomainError("simulate_with_noise: dimension mismatch");
  }
  Trajectory t;
  t.eta = eta;
  t.dim = d;
  t.m = static_cast<std::int64_t>(noises.size()) / d;
  t.noises.assign(noises.begin(), noises.end());
  t.states.resize(static_cast<std::size_t>((t.m + 1) * d));
  std::copy(theta0.data(), theta0.data() + d, t.states.begin());
  for (std::int64_t k = 0; k < t.m; ++k) {
    std::span<double> out{t.states.data() + (k + 1) * d, static_cast<std::size_t>(d)};
    em_step(model, eta, t.state(k), t.noise(k), out, k);
    check_norm(out, k + 1);
  }
  return t;
}

Vector ou_exact_step(const Vector& theta, const Matrix& A, const Matrix& sigma,
                     double delta_t, const Vector& xi) {
  if (A.rows() != 1 || A.cols() != 1 || sigma.rows() != 1 || sigma.cols() != 1 ||
      theta.size() != 1 || xi.size() != 1) {
    throw DomainError("ou_exact_step: only the scalar (d = 1) closed form is available");
  }
  if (!(delta_t > 0.0)) {
    throw DomainError("ou_exact_step: delta_t must be positive");
  }
  const double a = A(0, 0);
  const double s = sigma(0, 0);
  if (!(a > 0.0)) {
    throw DomainError("ou_exact_step: need a > 0");
  }
  const double decay = std::exp(-a * delta_t);
  const double sd = std::sqrt(s * s * -std::expm1(-2.0 * a * delta_t) / (2.0 * a));
  Vector out(1);
  out(0) = decay * theta(0) + sd * xi(0);
  return out;
}

}  // namespace mdev
