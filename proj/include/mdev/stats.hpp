#pragma once

#include "mdev/integrator.hpp"
#include "mdev/stein.hpp"

#include <array>
#include <utility>

namespace mdev {

constexpr double kDegenerateDenominator = 1e-14;

/// Mean of h over theta_0 .. theta_{m-1}; theta_m is excluded.
double compute_pi_hat(const Trajectory& traj, const Observable& obs);

/// (1/m) sum |sigma^T grad phi(theta_k)|^2.
double compute_Y(const Trajectory& traj, const SteinSolution& sol, const Matrix& sigma);

/// (1/(eta m)) sum ((theta_{k+1} - theta_k - eta g(theta_k))^T grad phi(theta_k))^2.
/// Uses only the states and the drift; sigma is never consulted.
double compute_V(const Trajectory& traj, const SteinSolution& sol, const Model& model);

/// (1/m) sum ((sigma xi_{k+1})^T grad phi(theta_k))^2, equal to compute_V for
/// trajectories produced by em_step.
double compute_V_noise_form(const Trajectory& traj, const SteinSolution& sol,
                            const Matrix& sigma);

struct NormalizedPair {
  double W = 0.0;
  double S = 0.0;
};

/// W alone, requiring only Y > 1e-14; usable when V degenerates.
double compute_W(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                 const Observable& obs, double pi_h);

/// W = eta^{-1/2}(pi_hat - pi_h)/sqrt(Y), S likewise with V. Throws
/// DomainError when Y or V is below 1e-14.
NormalizedPair compute_W_S(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                           const Observable& obs, double pi_h);

struct Decomposition {
  double H = 0.0;
  std::array<double, 6> R{};
  double lhs = 0.0;  // eta^{-1/2}(pi_hat - pi(h))
  double residual = 0.0;
  int quad_order = 0;
};

/// Martingale-plus-remainder split of eta^{-1/2}(pi_hat - pi(h)) from a
/// third-order Taylor expansion of phi along each EM increment. The overall
/// scale is eta^{-3/2}/m, which is sqrt(eta) for the default m = eta^{-2};
/// third-order remainders use the integral form with kernel (1-t)^2/2 on
/// Gauss-Legendre nodes, so the identity is exact up to quadrature error.
Decomposition decompose(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                        const Observable& obs, int quad_order = 16);

/// sum_k [((sigma xi_{k+1})^T grad phi(theta_k))^2 - |sigma^T grad phi(theta_k)|^2].
double compute_psi_sum(const Trajectory& traj, const SteinSolution& sol, const Matrix& sigma);

/// eta * sum_{k<m} |g(theta_k)|^2.
double compute_drift_sum(const Trajectory& traj, const Model& model);

struct StatBundle {
  double pi_hat = 0.0;
  double Y = 0.0;
  double V = 0.0;
  double W = 0.0;
  double S = 0.0;
  double H = 0.0;
  std::array<double, 6> R{};
  double psi_sum = 0.0;
  double decomposition_residual = 0.0;
  double drift_sum = 0.0;
  double y_sum = 0.0;  // sum_{k<m} |sigma^T grad phi(theta_k)|^2
  bool decomposed = false;
};

struct StatOptions {
  bool decompose = false;
  int quad_order = 16;
};

/// Every per-trajectory statistic in one pass over the states.
StatBundle compute_stats(const Trajectory& traj, const SteinSolution& sol, const Model& model,
                         const Observable& obs, const StatOptions& opts = {});

}  // namespace mdev
