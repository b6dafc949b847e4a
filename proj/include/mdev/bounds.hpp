#pragma once

#include <span>
#include <utility>

namespace mdev {

/// 1 - Phi(lambda), via erfc.
double normal_tail(double lambda);
/// Phi(x).
double normal_cdf(double x);

struct Sandwich {
  double lower = 0.0;
  double upper = 0.0;
};

/// e^{-l^2/2}/(sqrt(2 pi)(1+l)) <= 1 - Phi(l) <= e^{-l^2/2}/(sqrt(pi)(1+l)), l >= 0.
Sandwich normal_tail_sandwich(double lambda);

/// c (x^3 eta + x^2 eta^{1/2} + (1+x)(eta |ln eta|)^{1/2}) on 0 <= x <= eta^{-3/4}.
double cmd_envelope(double x, double eta, double c);

/// Upper end of the range where the moderate deviation envelope is asserted.
double cmd_range(double eta);

enum class Lm21Form {
  kFinal,     // c_a exp{-x^2 / (c_a (u_n + x^{2-a}))}
  kRelaxed,   // c_a exp{-x^2 / (2 c_a (u_n + x^{2-a}))}
};

/// Exponential martingale tail bound for sum of martingale differences with
/// u_n = sum ||E(z_i^2 exp{c |z_i|^a} | F)||_inf.
double lm21_bound(double x, double u_n, double alpha, double c_alpha,
                  Lm21Form form = Lm21Form::kFinal);

/// The two-branch bound before relaxation, with moment constant c. Branch
/// threshold x = (c u_n)^{1/(2-a)}. For alpha = 1 the first branch is its
/// alpha -> 1 limit exp{-x^2/(2 u_n)}.
double lm21_piecewise(double x, double u_n, double alpha, double c);

/// C (x^3 (eps + delta) + (1+x)(delta |ln delta| + eps |ln eps|)), eps, delta in (0, 1/2].
double th0_envelope(double x, double epsilon, double delta, double C);

/// inf_{x in (lo, hi)} x^2/2; either end may be infinite.
double mdp_rate(double lo, double hi);

/// Worst ratio |E z^k| / (k!/2 eps^{k-2} E z^2) over k = 3..k_max, where
/// moments[i] = E z^{i+2}. A value <= 1 certifies the Bernstein moment
/// condition for the probed law (k = 2 holds with equality by definition).
double bernstein_probe(std::span<const double> moments, double epsilon);

}  // namespace mdev
