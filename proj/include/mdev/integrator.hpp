#pragma once

#include "mdev/models.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mdev {

/// One Euler-Maruyama run. States and noises are stored flat, d values per
/// entry; noise(k) is the standard-normal vector xi_{k+1} that produced
/// state(k + 1) from state(k).
struct Trajectory {
  double eta = 0.0;
  std::int64_t m = 0;
  int dim = 1;
  std::vector<double> states;  // (m + 1) * dim
  std::vector<double> noises;  // m * dim
  std::uint64_t seed = 0;
  std::uint64_t rep_index = 0;
  std::int64_t burn_in = 0;

  std::span<const double> state(std::int64_t k) const {
    return {states.data() + k * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> noise(std::int64_t k) const {
    return {noises.data() + k * dim, static_cast<std::size_t>(dim)};
  }
};

constexpr double kDivergenceNorm = 1e12;

/// theta + eta g(theta) + sqrt(eta) sigma xi, written into `out`.
/// `step` is only used to label errors.
void em_step(const Model& model, double eta, std::span<const double> theta,
             std::span<const double> xi, std::span<double> out, std::int64_t step = -1);

Vector em_step(const Vector& theta, double eta, const Model& model, const Vector& xi);

/// Deterministic standard normal for (seed, replication, step, coordinate).
/// Burn-in steps use step indices 0..burn_in-1, recorded noise xi_k uses
/// burn_in + k - 1.
double noise_value(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t step,
                   std::uint32_t coord);

/// floor(eta^-2), robust to eta^-2 landing just below an integer in floating point.
std::int64_t default_steps(double eta);

/// ceil(10 / (K1 eta)): about ten relaxation times.
std::int64_t default_burn_in(const Model& model, double eta);

Trajectory simulate(const Model& model, double eta, std::int64_t m, std::int64_t burn_in,
                    std::uint64_t seed, std::uint64_t rep_index);

/// Records steps driven by caller-supplied noise (m * d values) from theta0.
Trajectory simulate_with_noise(const Model& model, double eta, const Vector& theta0,
                               std::span<const double> noises);

/// Exact scalar OU transition for dX = -a X dt + sigma dB over delta_t.
Vector ou_exact_step(const Vector& theta, const Matrix& A, const Matrix& sigma,
                     double delta_t, const Vector& xi);

}  // namespace mdev
