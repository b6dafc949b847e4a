#include "mdev/quadrature.hpp"

#include "mdev/types.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>

namespace mdev {

GaussRule gauss_legendre_unit(int n) {
  if (n < 1) {
    throw DomainError("gauss_legendre_unit: order must be >= 1");
  }
  // Boost returns the nonnegative zeros of P_n in ascending order.
  const std::vector<double> zeros = boost::math::legendre_p_zeros<double>(n);
  std::vector<double> x;
  for (double z : zeros) {
    x.push_back(z);
    if (z != 0.0) x.push_back(-z);
  }
  std::sort(x.begin(), x.end());
  GaussRule rule;
  for (double z : x) {
    const double dp = boost::math::legendre_p_prime<double>(n, z);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes.push_back(0.5 * (z + 1.0));
    rule.weights.push_back(0.5 * w);
  }
  return rule;
}

}  // namespace mdev
