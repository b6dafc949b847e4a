#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace mdev {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Column-major views over flat storage. Trajectories and derivative buffers
// are kept flat so the hot loops never allocate.
using VecView = Eigen::Map<const Eigen::VectorXd>;
using MutVecView = Eigen::Map<Eigen::VectorXd>;

inline VecView view(std::span<const double> s) {
  return VecView(s.data(), static_cast<Eigen::Index>(s.size()));
}
inline MutVecView mut_view(std::span<double> s) {
  return MutVecView(s.data(), static_cast<Eigen::Index>(s.size()));
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model construction or assumption failure.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by a caller (bad range, shape mismatch).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// EM recursion produced a non-finite or exploding state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Stein solution failed its residual certification.
class CertificationError : public Error {
 public:
  CertificationError(const std::string& what, double worst_x, double residual)
      : Error(what), worst_x_(worst_x), residual_(residual) {}
  double worst_x() const { return worst_x_; }
  double residual() const { return residual_; }

 private:
  double worst_x_;
  double residual_;
};

/// Configuration file rejected; carries the JSON path of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : Error(path.empty() ? msg : path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace mdev
