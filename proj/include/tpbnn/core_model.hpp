#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "tpbnn/rng.hpp"

namespace tpbnn {

enum class Activation { identity, erf, relu, tanh };

double apply_activation(Activation act, double x);
// Derivative of the activation; relu uses the subgradient 0 at x = 0.
double activation_derivative(Activation act, double x);
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation act);

// Layer widths n_0..n_L and the L activations applied to the input of each
// layer. The first activation acts on the raw input and must be identity.
class Architecture {
 public:
  Architecture(std::vector<int> widths, std::vector<Activation> activations);

  // `hidden_layers` equal-width hidden layers of `hidden_width` units, identity
  // into the first layer and `hidden_activation` everywhere after.
  static Architecture uniform(int input_dim, int hidden_width, int hidden_layers, int output_dim,
                              Activation hidden_activation);

  [[nodiscard]] int depth() const { return static_cast<int>(widths_.size()) - 1; }
  [[nodiscard]] int width(int layer) const;
  [[nodiscard]] Activation activation(int layer) const;  // layer in 1..L
  [[nodiscard]] int input_dim() const { return widths_.front(); }
  [[nodiscard]] int output_dim() const { return widths_.back(); }
  [[nodiscard]] int min_hidden_width() const;
  [[nodiscard]] std::size_t param_count() const;
  [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
  [[nodiscard]] const std::vector<Activation>& activations() const { return activations_; }

  bool operator==(const Architecture&) const = default;

 private:
  std::vector<int> widths_;
  std::vector<Activation> activations_;
};

// Per-layer weight and bias variances. Weight variances must be positive;
// bias variances may be zero (point-mass bias) for kernel computations, but
// anything that samples or scores parameters calls require_strictly_positive().
class VarianceVector {
 public:
  VarianceVector(std::vector<double> weight, std::vector<double> bias);
  static VarianceVector uniform(int depth, double weight, double bias);

  [[nodiscard]] int depth() const { return static_cast<int>(weight_.size()); }
  [[nodiscard]] double weight(int layer) const { return weight_.at(layer - 1); }
  [[nodiscard]] double bias(int layer) const { return bias_.at(layer - 1); }
  // Copy with sigma2 as both last-layer variances.
  [[nodiscard]] VarianceVector with_last_layer(double sigma2) const;
  void require_strictly_positive() const;

  bool operator==(const VarianceVector&) const = default;

 private:
  std::vector<double> weight_;
  std::vector<double> bias_;
};

struct ParamBlock {
  std::size_t offset;
  int rows;
  int cols;
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flat parameter vector. Layout: layer-major, W^(l) before b^(l), each weight
// block row-major.
class ParamVector {
 public:
  explicit ParamVector(const Architecture& arch);
  ParamVector(const Architecture& arch, Eigen::VectorXd values);

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  [[nodiscard]] int depth() const { return static_cast<int>(weights_.size()); }
  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  [[nodiscard]] const ParamBlock& weight_block(int layer) const { return weights_.at(layer - 1); }
  [[nodiscard]] const ParamBlock& bias_block(int layer) const { return biases_.at(layer - 1); }

  [[nodiscard]] Eigen::Map<const RowMajorMatrix> weight(int layer) const;
  Eigen::Map<RowMajorMatrix> weight(int layer);
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);

 private:
  std::vector<ParamBlock> weights_;
  std::vector<ParamBlock> biases_;
  Eigen::VectorXd values_;
};

// Training data: x is d_in x k, y is d_out x k (one column per point).
class Dataset {
 public:
  Dataset(Eigen::MatrixXd x, Eigen::MatrixXd y);
  static Dataset empty(int input_dim, int output_dim);

  [[nodiscard]] const Eigen::MatrixXd& x() const { return x_; }
  [[nodiscard]] const Eigen::MatrixXd& y() const { return y_; }
  [[nodiscard]] int size() const { return static_cast<int>(x_.cols()); }

 private:
  Eigen::MatrixXd x_;
  Eigen::MatrixXd y_;
};

// Prior standard deviation of every coordinate of theta, in layout order:
// sqrt(var_W(l) / n_{l-1}) for weights, sqrt(var_b(l)) for biases.
Eigen::VectorXd prior_standard_deviations(const Architecture& arch, const VarianceVector& vars);

// Independent Gaussian prior draw. When sigma2 is given it replaces both
// last-layer variances. Coordinates are drawn in layout order, so for a fixed
// stream the last layer scales exactly with sqrt(sigma2).
ParamVector sample_prior_params(const Architecture& arch, const VarianceVector& vars,
                                std::optional<double> sigma2, RngStream& rng);

// Batched forward pass; inputs is d_in x m, result is d_out x m.
Eigen::MatrixXd forward(const Architecture& arch, const ParamVector& params,
                        const Eigen::MatrixXd& inputs);

// log of (2 pi s)^(-n k / 2) exp(-||y - z||_F^2 / (2 s)).
double log_likelihood(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& y, double sigma2);

double log_prior(const Architecture& arch, const VarianceVector& vars, const ParamVector& params);

// Gaussian log-likelihood of the data under f_theta with noise variance
// `noise_var`; when `grad` is non-null it receives d/dtheta by reverse-mode
// accumulation.
double log_likelihood_and_gradient(const Architecture& arch, const ParamVector& params,
                                   const Dataset& data, double noise_var, Eigen::VectorXd* grad);

// log prior(theta | prior_vars) + log likelihood with noise variance, and
// optionally its gradient in theta.
double log_posterior_and_gradient(const Architecture& arch, const VarianceVector& prior_vars,
                                  const ParamVector& params, const Dataset& data, double noise_var,
                                  Eigen::VectorXd* grad);

// Gradient of the unnormalized log posterior of theta given sigma2 in the
// hierarchical model: last-layer prior variances and likelihood variance are
// all sigma2.
Eigen::VectorXd grad_log_posterior_theta(const Architecture& arch, const VarianceVector& vars,
                                         const ParamVector& params, double sigma2,
                                         const Dataset& data);

}  // namespace tpbnn
