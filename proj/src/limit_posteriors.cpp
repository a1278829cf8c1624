#include "tpbnn/limit_posteriors.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tpbnn/errors.hpp"
#include "tpbnn/linalg.hpp"
#include "tpbnn/log.hpp"

namespace tpbnn {
namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(name) + " must be positive");
}

void require_train_shapes(const Eigen::MatrixXd& k, const Eigen::VectorXd& y) {
  if (k.rows() != k.cols()) throw DimensionError("training kernel must be square");
  if (k.rows() != y.size()) throw DimensionError("training kernel and targets disagree on k");
}

Eigen::MatrixXd identity_like(const Eigen::MatrixXd& k) { return Eigen::MatrixXd::Identity(k.rows(), k.cols()); }

// M^{-1} = K'(K' + I)^{-1} = I - (K' + I)^{-1}; also returns (K' + I)^{-1} y.
struct ShiftedSolve {
  Eigen::MatrixXd m_inverse;
  Eigen::VectorXd alpha;
};

ShiftedSolve shifted_solve(const Eigen::MatrixXd& kprime, const Eigen::VectorXd& y) {
  const SpdFactor shifted = factorize_spd(kprime + identity_like(kprime), "K' + I");
  ShiftedSolve out;
  const Eigen::MatrixXd inv = shifted.solve(identity_like(kprime));
  out.m_inverse = identity_like(kprime) - 0.5 * (inv + inv.transpose());
  out.alpha = shifted.solve(y);
  return out;
}

}  // namespace

GaussianPosterior gp_posterior(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                               const Eigen::MatrixXd& k_test, const Eigen::VectorXd& y, double noise_var) {
  require_positive(noise_var, "noise variance");
  require_train_shapes(k_train, y);
  if (k_cross.cols() != k_train.rows() || k_cross.rows() != k_test.rows() || k_test.rows() != k_test.cols())
    throw DimensionError("gp_posterior kernel blocks have inconsistent shapes");
  GaussianPosterior post;
  if (k_train.rows() == 0) {
    post.mean = Eigen::VectorXd::Zero(k_test.rows());
    post.covariance = k_test;
    return post;
  }
  const SpdFactor fac = factorize_spd(k_train + noise_var * identity_like(k_train), "K + noise I");
  post.mean = k_cross * fac.solve(y);
  const Eigen::MatrixXd cov = k_test - k_cross * fac.solve(Eigen::MatrixXd(k_cross.transpose()));
  post.covariance = 0.5 * (cov + cov.transpose());
  return post;
}

NigPosterior nig_posterior(const Eigen::MatrixXd& kprime_train, const Eigen::VectorXd& y, double a, double b) {
  require_positive(a, "a");
  require_positive(b, "b");
  require_train_shapes(kprime_train, y);
  const SpdFactor kfac = factorize_spd(kprime_train, "K'(x_D)");
  NigPosterior post;
  const Eigen::MatrixXd kinv = kfac.solve(identity_like(kprime_train));
  post.m = identity_like(kprime_train) + 0.5 * (kinv + kinv.transpose());
  const ShiftedSolve s = shifted_solve(kprime_train, y);
  post.covariance_template = s.m_inverse;
  post.mean = s.m_inverse * y;
  // y (I - M^{-1}) y^T = y (K' + I)^{-1} y^T
  post.variance.shape = a + 0.5 * static_cast<double>(y.size());
  post.variance.rate = b + 0.5 * y.dot(s.alpha);
  return post;
}

StudentTPosterior tp_posterior_train(const Eigen::MatrixXd& kprime_train, const Eigen::VectorXd& y, double a,
                                     double b) {
  if (a <= 0.5) log_warning("tp_posterior_train: a <= 1/2 violates the hyperparameter constraint");
  const NigPosterior nig = nig_posterior(kprime_train, y, a, b);
  StudentTPosterior out;
  out.dof = 2.0 * a + static_cast<double>(y.size());
  out.location = nig.mean;
  out.scale = nig.variance.rate * 2.0 / out.dof * nig.covariance_template;
  out.m = nig.m;
  out.variance = nig.variance;
  return out;
}

StudentTPosterior tp_posterior_predict(const KernelMatrix& kprime_full, const Eigen::VectorXd& y, double a, double b) {
  require_positive(a, "a");
  require_positive(b, "b");
  if (kprime_full.train_count() != y.size()) throw DimensionError("kernel train partition and targets disagree on k");
  if (a <= 0.5) log_warning("tp_posterior_predict: a <= 1/2 violates the hyperparameter constraint");
  const Eigen::MatrixXd kd = kprime_full.train_block();
  const Eigen::MatrixXd kt = kprime_full.test_block();
  const Eigen::MatrixXd ktd = kprime_full.cross_block();
  const double k = static_cast<double>(y.size());

  StudentTPosterior out;
  out.dof = 2.0 * a + k;
  out.variance.shape = a + 0.5 * k;
  if (y.size() == 0) {
    out.variance.rate = b;
    out.location = Eigen::VectorXd::Zero(kt.rows());
    out.scale = b * 2.0 / out.dof * kt;
    out.m.resize(0, 0);
    return out;
  }
  const SpdFactor shifted = factorize_spd(kd + identity_like(kd), "K'(x_D) + I");
  const Eigen::VectorXd alpha = shifted.solve(y);
  out.variance.rate = b + 0.5 * y.dot(alpha);
  out.location = ktd * alpha;
  Eigen::MatrixXd cond = kt - ktd * shifted.solve(Eigen::MatrixXd(ktd.transpose()));
  cond = 0.5 * (cond + cond.transpose());
  out.scale = out.variance.rate * 2.0 / out.dof * cond;
  // M = I + K'^{-1} only when K'_D is invertible; (K'+I)^{-1} is always available.
  try {
    const SpdFactor kfac = factorize_spd(kd, "K'(x_D)");
    if (kfac.jitter > 0.0) throw NumericalError("K'(x_D) is singular");
    const Eigen::MatrixXd inv = kfac.solve(identity_like(kd));
    out.m = identity_like(kd) + 0.5 * (inv + inv.transpose());
  } catch (const NumericalError&) {
    out.m.resize(0, 0);
  }
  return out;
}

StudentT marginalize_nig_to_t(const Eigen::VectorXd& mu, const Eigen::MatrixXd& lambda, double alpha, double beta) {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (lambda.rows() != lambda.cols() || lambda.rows() != mu.size())
    throw DimensionError("lambda must be square and match mu");
  return StudentT{2.0 * alpha, mu, (beta / alpha) * lambda};
}

double student_t_logpdf(const Eigen::VectorXd& x, double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  require_positive(nu, "nu");
  if (x.size() != mu.size() || sigma.rows() != mu.size() || sigma.cols() != mu.size())
    throw DimensionError("student_t_logpdf shapes disagree");
  const Eigen::MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all())
    throw NumericalError("Student-t scale matrix is singular");
  const double k = static_cast<double>(x.size());
  const Eigen::VectorXd r = llt.matrixL().solve(x - mu);
  const double quad = r.squaredNorm();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return std::lgamma(0.5 * (nu + k)) - std::lgamma(0.5 * nu) - 0.5 * k * std::log(nu * std::numbers::pi) -
         0.5 * logdet - 0.5 * (nu + k) * std::log1p(quad / nu);
}

}  // namespace tpbnn
