#pragma once

#include "mdev/integrator.hpp"
#include "mdev/models.hpp"

#include <vector>

namespace testing {

inline mdev::Model ou(double a = 1.0, double sigma = 1.0) {
  return mdev::make_linear_model(mdev::Matrix::Constant(1, 1, a), mdev::Matrix::Constant(1, 1, sigma), "ou");
}

inline mdev::Vector vec(std::initializer_list<double> v) {
  mdev::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// A 1D trajectory written by hand; noises are xi_1..xi_m.
inline mdev::Trajectory hand_trajectory(double eta, std::vector<double> states,
                                        std::vector<double> noises = {}) {
  mdev::Trajectory t;
  t.eta = eta;
  t.dim = 1;
  t.m = static_cast<std::int64_t>(states.size()) - 1;
  t.states = std::move(states);
  t.noises = noises.empty() ? std::vector<double>(static_cast<std::size_t>(t.m), 0.0) : std::move(noises);
  return t;
}

}  // namespace testing
