#include "mdev/bounds.hpp"

#include "mdev/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mdev {

double normal_tail(double lambda) { return 0.5 * std::erfc(lambda / std::numbers::sqrt2); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Sandwich normal_tail_sandwich(double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("normal_tail_sandwich: lambda must be >= 0");
  const double e = std::exp(-0.5 * lambda * lambda);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  return {e / (std::numbers::sqrt2 * sqrt_pi * (1.0 + lambda)), e / (sqrt_pi * (1.0 + lambda))};
}

double cmd_range(double eta) { return std::pow(eta, -0.75); }

double cmd_envelope(double x, double eta, double c) {
  if (!(eta > 0.0 && eta < 1.0)) throw DomainError("cmd_envelope: eta must lie in (0, 1)");
  if (!(x >= 0.0) || x > cmd_range(eta) * (1.0 + 1e-12)) {
    throw DomainError("cmd_envelope: x must lie in [0, eta^{-3/4}]");
  }
  const double log_term = std::sqrt(eta * std::abs(std::log(eta)));
  return c * (x * x * x * eta + x * x * std::sqrt(eta) + (1.0 + x) * log_term);
}

double lm21_bound(double x, double u_n, double alpha, double c_alpha, Lm21Form form) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("lm21_bound: alpha must lie in (0, 1]");
  if (!(u_n >= 1.0)) throw DomainError("lm21_bound: u_n must be >= 1");
  if (!(c_alpha > 0.0)) throw DomainError("lm21_bound: c_alpha must be positive");
  if (!(x >= 0.0)) throw DomainError("lm21_bound: x must be >= 0");
  const double factor = form == Lm21Form::kRelaxed ? 2.0 : 1.0;
  return c_alpha * std::exp(-x * x / (factor * c_alpha * (u_n + std::pow(x, 2.0 - alpha))));
}

double lm21_piecewise(double x, double u_n, double alpha, double c) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("lm21_piecewise: alpha must lie in (0, 1]");
  if (!(u_n >= 1.0) || !(c > 0.0)) throw DomainError("lm21_piecewise: need u_n >= 1, c > 0");
  if (!(x > 0.0)) throw DomainError("lm21_piecewise: x must be positive");
  const double threshold = std::pow(c * u_n, 1.0 / (2.0 - alpha));
  if (x < threshold) {
    const double gauss = std::exp(-x * x / (2.0 * u_n));
    if (alpha == 1.0) return gauss;
    const double p = alpha / (1.0 - alpha);
    const double log_tail = (2.0 / (1.0 - alpha)) * std::log(x) -
                            ((1.0 + alpha) / (1.0 - alpha)) * std::log(u_n) -
                            (2.0 / (alpha * (1.0 + alpha))) * std::log(c) -
                            c * std::pow(c * u_n / x, p);
    return gauss + std::exp(log_tail);
  }
  const double xa = std::pow(x, alpha);
  return std::exp(-c * xa * (1.0 - c * u_n / (2.0 * std::pow(x, 2.0 - alpha)))) +
         u_n / (std::pow(c, 2.0 / alpha) * x * x) * std::exp(-c * xa);
}

double th0_envelope(double x, double epsilon, double delta, double C) {
  if (!(epsilon > 0.0 && epsilon <= 0.5) || !(delta > 0.0 && delta <= 0.5)) {
    throw DomainError("th0_envelope: epsilon and delta must lie in (0, 1/2]");
  }
  if (!(x >= 0.0) || !(C > 0.0)) throw DomainError("th0_envelope: need x >= 0, C > 0");
  const double logs = delta * std::abs(std::log(delta)) + epsilon * std::abs(std::log(epsilon));
  return C * (x * x * x * (epsilon + delta) + (1.0 + x) * logs);
}

double mdp_rate(double lo, double hi) {
  if (std::isnan(lo) || std::isnan(hi) || !(lo < hi)) {
    throw DomainError("mdp_rate: empty interval");
  }
  if (lo <= 0.0 && hi >= 0.0) return 0.0;
  const double nearest = lo > 0.0 ? lo : hi;
  return 0.5 * nearest * nearest;
}

double bernstein_probe(std::span<const double> moments, double epsilon) {
  if (moments.size() < 2) throw DomainError("bernstein_probe: need moments up to k >= 3");
  const double m2 = moments[0];
  if (!(m2 > 0.0)) throw DomainError("bernstein_probe: second moment must be positive");
  double worst = 0.0;
  double factorial = 2.0;
  for (std::size_t i = 1; i < moments.size(); ++i) {
    const double k = static_cast<double>(i + 2);
    factorial *= k;
    const double cap = 0.5 * factorial * std::pow(epsilon, k - 2.0) * m2;
    worst = std::max(worst, std::abs(moments[i]) / cap);
  }
  return worst;
}

}  // namespace mdev
