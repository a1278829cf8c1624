#pragma once

#include <Eigen/Dense>

namespace tpbnn {

// Cholesky factor of a symmetric positive-definite matrix, with the diagonal
// jitter that was needed to obtain it.
struct SpdFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt.solve(rhs); }
  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt.solve(rhs); }
  [[nodiscard]] Eigen::MatrixXd lower() const { return llt.matrixL(); }
  [[nodiscard]] double log_determinant() const;
};

// Symmetrizes, then factorizes with jitter escalation 0, 1e-12, 1e-11, ...,
// 1e-8 (relative to the mean diagonal). Throws NumericalError if all fail.
SpdFactor factorize_spd(const Eigen::MatrixXd& a, const char* what = "matrix");

// Symmetrize and clip slightly negative eigenvalues (down to -tol relative to
// the largest magnitude) to zero. Larger violations throw NumericalError.
Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& a, double tol = 1e-10);

// A matrix S with S S^T = a for symmetric PSD a: Cholesky when it succeeds
// without jitter, otherwise an eigenvalue square root of the repaired matrix.
Eigen::MatrixXd psd_square_root(const Eigen::MatrixXd& a);

// Largest eigenvalue of the symmetrized matrix.
double largest_eigenvalue(const Eigen::MatrixXd& a);

}  // namespace tpbnn
