#include "mdev/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace mdev {

Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C) {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n || B.cols() != n || C.rows() != n ||
      C.cols() != n) {
    throw DomainError("sylvester: shape mismatch");
  }
  if (n > kMaxDim) {
    throw DomainError("sylvester: dimension " + std::to_string(n) +
                      " exceeds " + std::to_string(kMaxDim));
  }
  const Matrix I = Matrix::Identity(n, n);
  Matrix K(n * n, n * n);
  // vec(A X) = (I (x) A) vec X, vec(X B) = (B^T (x) I) vec X
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) = I(i, j) * A + B(j, i) * I;
    }
  }
  Eigen::FullPivLU<Matrix> lu(K);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw ModelError("sylvester: singular Kronecker system (eigenvalue cancellation)");
  }
  const Eigen::Map<const Eigen::VectorXd> c(C.data(), n * n);
  Eigen::VectorXd x = lu.solve(c);
  return Eigen::Map<Matrix>(x.data(), n, n);
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& Q) {
  return solve_sylvester(A, A.transpose(), Q);
}

double min_sym_eigenvalue(const Matrix& A) {
  const Matrix S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double operator_norm(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues()(0);
}

}  // namespace mdev
