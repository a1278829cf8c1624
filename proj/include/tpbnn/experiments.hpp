#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpbnn/core_model.hpp"
#include "tpbnn/gibbs.hpp"
#include "tpbnn/nngp_kernel.hpp"

namespace tpbnn {

struct DatasetSpec {
  std::string function = "sin2pi";  // sin2pi | zero | linear
  int points = 8;
  double noise_sd = 0.1;
  double lo = -1.0;
  double hi = 1.0;
  int grid_points = 64;
  double grid_lo = -1.0;
  double grid_hi = 1.0;
  int w1_points = 5;  // evenly spaced sub-grid used for exact W1
};

enum class VarianceModel { inverse_gamma, fixed };

struct SamplingSpec {
  int draws = 100;
  int repetitions = 10;
  int burn_in = 500;
  int thin = 1;
  int hmc_steps = 5;
  int max_tree_depth = 8;
  double target_accept = 0.8;
  Sigma2Parameterization parameterization = Sigma2Parameterization::non_centered;
  double likelihood_scale = 1.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int jobs = 1;

  int input_dim = 1;
  int hidden_layers = 2;
  Activation activation = Activation::erf;
  std::vector<int> widths{1, 2, 4, 8, 16, 32, 64, 128};

  double weight_variance = 5.0;
  double bias_variance = 5.0;
  std::optional<double> first_layer_bias_variance;

  VarianceModel variance_model = VarianceModel::inverse_gamma;
  double a = 3.0;
  double b = 2.0;
  double noise_variance = 0.1;  // fixed model, and the GP side of `compare`

  DatasetSpec data;
  SamplingSpec sampling;
  std::optional<ExpectationMethod> kernel_method;  // default per architecture
  int sliced_projections = 200;

  // diagnostics: (sigma2, n_L k) pairs and multistart count
  std::vector<std::pair<double, int>> likelihood_settings{{1.0, 1}, {4.0, 2}, {0.5, 3}};
  int restarts = 20;

  void validate() const;
  [[nodiscard]] Architecture architecture(int width) const;
  [[nodiscard]] VarianceVector variances() const;
};

// JSON (de)serialization. Unknown keys and malformed values throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);
// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Training data and the test grid implied by the config.
Dataset make_dataset(const ExperimentConfig& cfg);
Eigen::MatrixXd make_grid(const ExperimentConfig& cfg);
std::vector<int> w1_subgrid(int grid_points, int w1_points);

struct WidthResult {
  int width = 0;
  double w1 = 0.0;     // mean over repetitions
  double w1_lo = 0.0;  // min over repetitions
  double w1_hi = 0.0;  // max over repetitions
  std::uint64_t seed = 0;
  std::vector<double> repetitions;
  double sliced_w1 = 0.0;  // full grid, mean over repetitions
  double seconds = 0.0;
  double mean_accept = 0.0;
  double sigma2_mean = 0.0;
};

struct ConvergenceReport {
  std::string experiment;
  std::vector<WidthResult> rows;
  double slope = 0.0;  // log-log OLS of w1 on width; NaN below 4 widths
  Eigen::VectorXd limit_location;  // on the W1 sub-grid
  Eigen::VectorXd limit_scale_diag;
  double limit_dof = 0.0;  // 0 for Gaussian limits
  std::optional<ConstraintReport> constraint;
  std::uint64_t config_hash = 0;
  double seconds = 0.0;
};

// Least squares slope of log y on log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

ConvergenceReport run_prior_convergence(const ExperimentConfig& cfg);
ConvergenceReport run_posterior_convergence(const ExperimentConfig& cfg);
ConvergenceReport run_gaussian_baseline(const ExperimentConfig& cfg);

struct BandRow {
  double x = 0.0;
  double tp_lo = 0.0, tp_mid = 0.0, tp_hi = 0.0;
  double gp_lo = 0.0, gp_mid = 0.0, gp_hi = 0.0;
};

struct ComparisonReport {
  std::vector<BandRow> bands;  // 2.5 / 50 / 97.5 % quantiles per grid point
  double tp_dof = 0.0;
  std::optional<ConstraintReport> constraint;
  std::uint64_t config_hash = 0;
};

ComparisonReport run_comparison(const ExperimentConfig& cfg);

struct LikelihoodBoundRow {
  double sigma2 = 0.0;
  int dim = 0;  // n_L k
  double sup_analytic = 0.0;
  double sup_numeric = 0.0;
  double lip_analytic = 0.0;
  double lip_numeric = 0.0;
  double argmax_residual_sq = 0.0;  // at the gradient-norm maximizer
};

struct DiagnosticsReport {
  std::vector<LikelihoodBoundRow> rows;
  std::optional<ConstraintReport> constraint;
  std::uint64_t config_hash = 0;
};

// sup and Lipschitz constant of z -> (2 pi s)^(-N/2) exp(-||y - z||^2 / (2 s)),
// found by multistart gradient ascent.
LikelihoodBoundRow likelihood_bounds(double sigma2, int dim, int restarts, RngStream& rng);
DiagnosticsReport run_bound_diagnostics(const ExperimentConfig& cfg);

// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
void emit_figure_data(const ConvergenceReport& report, const std::string& dir, const std::string& stem);
void emit_figure_data(const ComparisonReport& report, const std::string& dir, const std::string& stem);
void emit_figure_data(const DiagnosticsReport& report, const std::string& dir, const std::string& stem);

// Reads back the (width, w1, w1_lo, w1_hi, seed) table.
std::vector<WidthResult> read_convergence_csv(const std::string& path);

std::string format_double(double v);

}  // namespace tpbnn
