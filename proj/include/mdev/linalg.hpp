#pragma once

#include "mdev/types.hpp"

namespace mdev {

constexpr int kMaxDim = 10;

/// Solves A X + X B = C for X by vectorizing into the d^2 x d^2 Kronecker
/// system (I (x) A + B^T (x) I) vec(X) = vec(C). Throws ModelError when the
/// system is singular (eigenvalue cancellation between A and -B).
Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C);

/// Continuous Lyapunov equation A S + S A^T = Q.
Matrix solve_lyapunov(const Matrix& A, const Matrix& Q);

/// Smallest eigenvalue of the symmetric part (A + A^T)/2.
double min_sym_eigenvalue(const Matrix& A);

/// Spectral norm ||A||_2.
double operator_norm(const Matrix& A);

}  // namespace mdev
