#pragma once

#include <Eigen/Dense>

#include "tpbnn/nngp_kernel.hpp"

namespace tpbnn {

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Inverse-Gamma(shape, rate), density proportional to s^-(shape+1) exp(-rate/s).
struct InverseGammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

// Multivariate Student-t with `dof` degrees of freedom, location and scale.
struct StudentT {
  double dof = 1.0;
  Eigen::VectorXd location;
  Eigen::MatrixXd scale;
};

struct StudentTPosterior : StudentT {
  // M = I + K'^{-1} over the training inputs.
  Eigen::MatrixXd m;
  InverseGammaParams variance;
};

// Conditional law of the latent function at the training inputs given sigma2
// is N(mean, sigma2 * covariance_template); sigma2 | D follows `variance`.
struct NigPosterior {
  Eigen::MatrixXd m;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance_template;  // M^{-1}
  InverseGammaParams variance;
};

// Fixed-noise GP regression. k_cross is test x train.
GaussianPosterior gp_posterior(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                               const Eigen::MatrixXd& k_test, const Eigen::VectorXd& y, double noise_var);

NigPosterior nig_posterior(const Eigen::MatrixXd& kprime_train, const Eigen::VectorXd& y, double a, double b);

StudentTPosterior tp_posterior_train(const Eigen::MatrixXd& kprime_train, const Eigen::VectorXd& y, double a,
                                     double b);

// Student-t posterior over the test partition of kprime_full. Uses
// (K'_D + I)^{-1}: sigma2 scales both kernel and noise and cancels.
StudentTPosterior tp_posterior_predict(const KernelMatrix& kprime_full, const Eigen::VectorXd& y, double a, double b);

// z | s ~ N(mu, s * lambda), s ~ IG(alpha, beta)  =>  z ~ t_{2 alpha}(mu, (beta / alpha) lambda).
StudentT marginalize_nig_to_t(const Eigen::VectorXd& mu, const Eigen::MatrixXd& lambda, double alpha, double beta);

double student_t_logpdf(const Eigen::VectorXd& x, double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

}  // namespace tpbnn
