#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "tpbnn/core_model.hpp"
#include "tpbnn/hmc.hpp"
#include "tpbnn/nngp_kernel.hpp"
#include "tpbnn/samplers.hpp"

namespace tpbnn {

struct GibbsConfig {
  int iterations = 1000;  // total outer iterations, burn-in included
  int burn_in = 500;      // step size adapts during these
  int thin = 1;
  int hmc_steps_per_iteration = 5;
  HmcConfig hmc;  // warmup is ignored: adaptation runs over burn-in
  std::optional<double> initial_sigma2;  // default: draw from IG(a, b)
  std::uint64_t seed = 0;
  Sigma2Parameterization parameterization = Sigma2Parameterization::non_centered;
  double likelihood_scale = 1.0;
  bool keep_params = true;  // retained theta draws can be large for wide networks

  void validate() const;
  [[nodiscard]] int retained_count() const;
};

struct GibbsDiagnostics {
  double mean_accept = 0.0;
  long transitions = 0;   // after burn-in
  long divergences = 0;   // after burn-in
  double step_size = 0.0;
  double mean_tree_depth = 0.0;
  double mean_leapfrog_steps = 0.0;
  double sigma2_mean = 0.0;
  double sigma2_min = 0.0;
  double sigma2_max = 0.0;
  long sigma2_proposals = 0;
  std::optional<ConstraintReport> constraint;
  double seconds = 0.0;
};

struct PosteriorSamples {
  std::vector<ParamVector> theta;  // empty when keep_params is false
  std::vector<double> sigma2;      // retained draws; the fixed value for the baseline
  Eigen::MatrixXd evaluations;     // draws x test points of f_theta(x_T), n_L = 1
  GibbsDiagnostics diagnostics;
};

// Alternates NUTS transitions on theta | sigma2, D with exact draws of
// sigma2 | theta, D. Requires n_L = 1 when test_inputs is non-empty.
PosteriorSamples gibbs_run(const Architecture& arch, const VarianceVector& vars, double a, double b,
                           const Dataset& data, const Eigen::MatrixXd& test_inputs, const GibbsConfig& cfg);

// NUTS on theta with the prior `vars` and fixed likelihood variance.
PosteriorSamples gibbs_run_fixed_variance(const Architecture& arch, const VarianceVector& vars, double noise_var,
                                          const Dataset& data, const Eigen::MatrixXd& test_inputs,
                                          const GibbsConfig& cfg);

}  // namespace tpbnn
