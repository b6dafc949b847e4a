#include "mdev/stats.hpp"

#include "mdev/linalg.hpp"
#include "mdev/quadrature.hpp"

#include <cmath>
#include <vector>

namespace mdev {

namespace {

void check_traj(const Trajectory& traj, int dim) {
  if (traj.m < 1) throw DomainError("statistics need m >= 1");
  if (traj.dim != dim ||
      traj.states.size() != static_cast<std::size_t>((traj.m + 1) * traj.dim) ||
      traj.noises.size() != static_cast<std::size_t>(traj.m * traj.dim)) {
    throw DomainError("trajectory length or dimension mismatch");
  }
}

// |sigma^T v|^2 and <sigma xi, v>.
double sigma_t_norm2(const Matrix& sigma, const double* v, int d) {
  double total = 0.0;
  for (int j = 0; j < d; ++j) {
    double c = 0.0;
    for (int i = 0; i < d; ++i) c += sigma(i, j) * v[i];
    total += c * c;
  }
  return total;
}

double sigma_xi_dot(const Matrix& sigma, std::span<const double> xi, const double* v, int d) {
  double total = 0.0;
  for (int i = 0; i < d; ++i) {
    double z = 0.0;
    for (int j = 0; j < d; ++j) z += sigma(i, j) * xi[j];
    total += z * v[i];
  }
  return total;
}

}  // namespace

double compute_pi_hat(const Trajectory& traj, const Observable& obs) {
  check_traj(traj, obs.dim);
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) s += obs.h(traj.state(k));
  return s.value() / static_cast<double>(traj.m);
}

double compute_Y(const Trajectory& traj, const SteinSolution& sol, const Matrix& sigma) {
  check_traj(traj, sol.dim);
  const int d = traj.dim;
  double gp[kMaxDim];
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    sol.grad(traj.state(k), {gp, static_cast<std::size_t>(d)});
    s += sigma_t_norm2(sigma, gp, d);
  }
  return s.value() / static_cast<double>(traj.m);
}

double compute_V(const Trajectory& traj, const SteinSolution& sol, const Model& model) {
  check_traj(traj, model.dim());
  const int d = traj.dim;
  const auto ud = static_cast<std::size_t>(d);
  double gp[kMaxDim], g[kMaxDim];
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    const auto x0 = traj.state(k);
    const auto x1 = traj.state(k + 1);
    sol.grad(x0, {gp, ud});
    model.drift(x0, {g, ud});
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += (x1[i] - x0[i] - traj.eta * g[i]) * gp[i];
    s += dot * dot;
  }
  return s.value() / (traj.eta * static_cast<double>(traj.m));
}

double compute_V_noise_form(const Trajectory& traj, const SteinSolution& sol,
                            const Matrix& sigma) {
  check_traj(traj, sol.dim);
  const int d = traj.dim;
  double gp[kMaxDim];
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    sol.grad(traj.state(k), {gp, static_cast<std::size_t>(d)});
    const double dot = sigma_xi_dot(sigma, traj.noise(k), gp, d);
    s += dot * dot;
  }
  return s.value() / static_cast<double>(traj.m);
}

namespace {

NormalizedPair normalize(double pi_hat, double pi_h, double eta, double Y, double V) {
  if (!(Y > kDegenerateDenominator)) {
    throw DomainError("W is undefined: Y <= 1e-14 (grad phi vanishes along the trajectory)");
  }
  if (!(V > kDegenerateDenominator)) {
    throw DomainError("S is undefined: V <= 1e-14 (grad phi vanishes along the trajectory)");
  }
  const double num = (pi_hat - pi_h) / std::sqrt(eta);
  return {num / std::sqrt(Y), num / std::sqrt(V)};
}

}  // namespace

double compute_W(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                 const Observable& obs, double pi_h) {
  const double Y = compute_Y(traj, sol, model.sigma());
  if (!(Y > kDegenerateDenominator)) {
    throw DomainError("W is undefined: Y <= 1e-14 (grad phi vanishes along the trajectory)");
  }
  return (compute_pi_hat(traj, obs) - pi_h) / std::sqrt(traj.eta) / std::sqrt(Y);
}

NormalizedPair compute_W_S(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                           const Observable& obs, double pi_h) {
  return normalize(compute_pi_hat(traj, obs), pi_h, traj.eta, compute_Y(traj, sol, model.sigma()),
                   compute_V(traj, sol, model));
}

double compute_psi_sum(const Trajectory& traj, const SteinSolution& sol, const Matrix& sigma) {
  check_traj(traj, sol.dim);
  const int d = traj.dim;
  double gp[kMaxDim];
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    sol.grad(traj.state(k), {gp, static_cast<std::size_t>(d)});
    const double dot = sigma_xi_dot(sigma, traj.noise(k), gp, d);
    s += dot * dot - sigma_t_norm2(sigma, gp, d);
  }
  return s.value();
}

double compute_drift_sum(const Trajectory& traj, const Model& model) {
  check_traj(traj, model.dim());
  double g[kMaxDim];
  CompensatedSum s;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    model.drift(traj.state(k), {g, static_cast<std::size_t>(traj.dim)});
    for (int i = 0; i < traj.dim; ++i) s += g[i] * g[i];
  }
  return traj.eta * s.value();
}

namespace {

double contract3(const double* T, const double* a, const double* b, const double* c, int d) {
  double total = 0.0;
  for (int k = 0; k < d; ++k) {
    for (int j = 0; j < d; ++j) {
      const double bc = b[j] * c[k];
      const double* col = T + d * (j + d * k);
      for (int i = 0; i < d; ++i) total += col[i] * a[i] * bc;
    }
  }
  return total;
}

}  // namespace

Decomposition decompose(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                        const Observable& obs, int quad_order) {
  check_traj(traj, model.dim());
  if (quad_order < 5) throw DomainError("decompose: quad_order must be >= 5");
  const bool polynomial = sol.polynomial_degree == 1 || sol.polynomial_degree == 2;
  if (!polynomial && !sol.has_third()) {
    throw DomainError("decompose: the Stein solution has no third derivative");
  }
  const int d = traj.dim;
  const auto ud = static_cast<std::size_t>(d);
  const double eta = traj.eta;
  const double se = std::sqrt(eta);
  const double m = static_cast<double>(traj.m);
  const double kappa = 1.0 / (eta * se * m);
  const Matrix& sigma = model.sigma();
  const Matrix& ssT = model.sigma_sigma_t();
  const GaussRule rule = gauss_legendre_unit(quad_order);

  double g[kMaxDim], z[kMaxDim], gp[kMaxDim], hs[kMaxDim * kMaxDim], pt[kMaxDim];
  std::vector<double> T(ud * ud * ud);
  CompensatedSum mart, r2, r3, r4, r5a, r5b, r6, lhs;

  for (std::int64_t k = 0; k < traj.m; ++k) {
    const auto x0 = traj.state(k);
    const auto x1 = traj.state(k + 1);
    const auto xi = traj.noise(k);
    model.drift(x0, {g, ud});
    for (int i = 0; i < d; ++i) {
      z[i] = 0.0;
      for (int j = 0; j < d; ++j) z[i] += sigma(i, j) * xi[j];
    }
    sol.grad(x0, {gp, ud});
    sol.hess(x0, {hs, ud * ud});
    lhs += obs.h(x0) - sol.pi_h;

    double dz = 0.0;
    for (int i = 0; i < d; ++i) dz += gp[i] * z[i];
    mart += dz;

    double zz = 0.0, gz = 0.0, zg = 0.0, gg = 0.0;
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) {
        const double hij = hs[i + d * j];
        zz += hij * (z[i] * z[j] - ssT(i, j));
        gz += hij * g[i] * z[j];
        zg += hij * z[i] * g[j];
        gg += hij * g[i] * g[j];
      }
    }
    r2 += zz;
    r3 += gz + zg;
    r5a += gg;

    if (polynomial) continue;
    double t_zzz = 0.0, t_ggg = 0.0, t_gzz = 0.0, t_ggz = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double t = rule.nodes[q];
      const double w = rule.weights[q] * 0.5 * (1.0 - t) * (1.0 - t);
      for (int i = 0; i < d; ++i) pt[i] = x0[i] + t * (x1[i] - x0[i]);
      sol.third({pt, ud}, {T.data(), T.size()});
      t_zzz += w * contract3(T.data(), z, z, z, d);
      t_ggg += w * contract3(T.data(), g, g, g, d);
      t_gzz += w * contract3(T.data(), g, z, z, d);
      t_ggz += w * contract3(T.data(), g, g, z, d);
    }
    r4 += t_zzz;
    r5b += t_ggg;
    r6 += 3.0 * t_gzz + 3.0 * se * t_ggz;
  }

  Decomposition out;
  out.quad_order = quad_order;
  out.H = -kappa * se * mart.value();
  out.R[0] = kappa * (sol.phi(traj.state(0)) - sol.phi(traj.state(traj.m)));
  out.R[1] = kappa * 0.5 * eta * r2.value();
  out.R[2] = kappa * 0.5 * eta * se * r3.value();
  out.R[3] = kappa * eta * se * r4.value();
  out.R[4] = kappa * (0.5 * eta * eta * r5a.value() + eta * eta * eta * r5b.value());
  out.R[5] = kappa * eta * eta * r6.value();
  out.lhs = lhs.value() / (se * m);
  CompensatedSum rhs;
  rhs += out.H;
  for (double r : out.R) rhs += -r;
  out.residual = std::abs(out.lhs - rhs.value());
  return out;
}

StatBundle compute_stats(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                         const Observable& obs, const StatOptions& opts) {
  check_traj(traj, model.dim());
  const int d = traj.dim;
  const auto ud = static_cast<std::size_t>(d);
  const Matrix& sigma = model.sigma();
  double g[kMaxDim], gp[kMaxDim];
  CompensatedSum h_sum, y_sum, v_sum, psi, drift;
  for (std::int64_t k = 0; k < traj.m; ++k) {
    const auto x0 = traj.state(k);
    const auto x1 = traj.state(k + 1);
    h_sum += obs.h(x0);
    sol.grad(x0, {gp, ud});
    model.drift(x0, {g, ud});
    const double y = sigma_t_norm2(sigma, gp, d);
    y_sum += y;
    double inc = 0.0;
    for (int i = 0; i < d; ++i) {
      inc += (x1[i] - x0[i] - traj.eta * g[i]) * gp[i];
      drift += g[i] * g[i];
    }
    v_sum += inc * inc;
    const double dz = sigma_xi_dot(sigma, traj.noise(k), gp, d);
    psi += dz * dz - y;
  }
  const double m = static_cast<double>(traj.m);
  StatBundle b;
  b.pi_hat = h_sum.value() / m;
  b.y_sum = y_sum.value();
  b.Y = b.y_sum / m;
  b.V = v_sum.value() / (traj.eta * m);
  b.psi_sum = psi.value();
  b.drift_sum = traj.eta * drift.value();
  const NormalizedPair ws = normalize(b.pi_hat, sol.pi_h, traj.eta, b.Y, b.V);
  b.W = ws.W;
  b.S = ws.S;
  if (opts.decompose) {
    const Decomposition dec = decompose(traj, sol, model, obs, opts.quad_order);
    b.H = dec.H;
    b.R = dec.R;
    b.decomposition_residual = dec.residual;
    b.decomposed = true;
  }
  return b;
}

}  // namespace mdev
