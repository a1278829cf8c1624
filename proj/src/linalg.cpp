#include "tpbnn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tpbnn/errors.hpp"

namespace tpbnn {

double SpdFactor::log_determinant() const {
  const Eigen::MatrixXd& l = llt.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

SpdFactor factorize_spd(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw DimensionError(std::string(what) + " must be square");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  const double scale = a.rows() > 0 ? std::max(sym.diagonal().cwiseAbs().mean(), 1e-300) : 1.0;
  SpdFactor out;
  for (double rel : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
    const double jitter = rel * scale;
    Eigen::MatrixXd m = sym;
    m.diagonal().array() += jitter;
    out.llt.compute(m);
    if (out.llt.info() == Eigen::Success && (out.llt.matrixLLT().diagonal().array() > 0.0).all()) {
      out.jitter = jitter;
      return out;
    }
  }
  throw NumericalError(std::string(what) +
                       " is singular or indefinite even with 1e-8 relative jitter; "
                       "add jitter or remove duplicate inputs");
}

Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& a, double tol) {
  if (a.rows() != a.cols()) throw DimensionError("repair_psd needs a square matrix");
  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1.0);
  if (vals.minCoeff() >= 0.0) return sym;
  if (vals.minCoeff() < -tol * scale)
    throw NumericalError("matrix is not positive semi-definite (min eigenvalue " +
                         std::to_string(vals.minCoeff()) + ")");
  const Eigen::VectorXd clipped = vals.cwiseMax(0.0);
  Eigen::MatrixXd out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd psd_square_root(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DimensionError("covariance must be square");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all())
    return llt.matrixL();
  const Eigen::MatrixXd repaired = repair_psd(sym);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(repaired);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

double largest_eigenvalue(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DimensionError("operator norm needs a square matrix");
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace tpbnn
