#pragma once

#include <Eigen/Dense>

#include "tpbnn/core_model.hpp"
#include "tpbnn/rng.hpp"

namespace tpbnn {

// Density proportional to s^-(a+1) exp(-b/s).
double sample_inverse_gamma(double a, double b, RngStream& rng);

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, RngStream& rng);

// s ~ IG(nu/2, nu/2), then N(mu, s sigma).
Eigen::VectorXd sample_mvt(double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, RngStream& rng);

// Repeated draws as rows of an n x dim matrix; the factorization is reused.
Eigen::MatrixXd sample_mvn_rows(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int n, RngStream& rng);
Eigen::MatrixXd sample_mvt_rows(double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int n,
                                RngStream& rng);

// Unnormalized density of sigma2 given theta and the data:
//   p(x) ∝ x^-(a'+1) exp(-b'/x + c'/sqrt(x)).
struct Sigma2ConditionalParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
};

// How theta carries sigma2.
//  non_centered: the last layer is stored at unit scale (theta'), f_theta = sigma f_theta'.
//                Only the likelihood depends on sigma2:
//                a' = a + n_L k / 2, b' = b + ||y||^2 / (2 lambda), c' = <y, f_theta'> / lambda.
//  centered:     theta holds the last layer at its actual scale; the prior of the
//                last layer and the likelihood both depend on sigma2:
//                a' = a + (n_{L-1} + k + 1) n_L / 2,
//                b' = b + (n_{L-1} ||W_L||^2 + ||b_L||^2 + ||y - f_theta||^2 / lambda) / 2, c' = 0.
// lambda scales the likelihood variance to lambda sigma2 (1 by default).
enum class Sigma2Parameterization { non_centered, centered };

Sigma2ConditionalParams conditional_sigma2_params(double a, double b, const Architecture& arch,
                                                  const ParamVector& params, const Dataset& data,
                                                  Sigma2Parameterization param = Sigma2Parameterization::centered,
                                                  double likelihood_scale = 1.0);

// log p(x) up to a constant.
double sigma2_conditional_log_density(const Sigma2ConditionalParams& p, double x);

// Same density after y = 1/sqrt(x): y^(2a'-1) exp(-b' y^2 + c' y).
double sigma2_transformed_log_density(const Sigma2ConditionalParams& p, double y);

struct Sigma2SamplerStats {
  long proposals = 0;
  bool used_fallback = false;
};

// Exact draw by rejection in y = 1/sqrt(x). Throws NumericalError when both
// envelopes exhaust their proposal budget.
double sample_sigma2_conditional(const Sigma2ConditionalParams& p, RngStream& rng,
                                 Sigma2SamplerStats* stats = nullptr, long budget = 10000);

}  // namespace tpbnn
