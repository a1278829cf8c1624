#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "tpbnn/core_model.hpp"

namespace tpbnn {

enum class KernelFlavor { full, rescaled };  // K and K'

enum class ExpectationMethod { analytic_erf, gauss_hermite, monte_carlo };

struct KernelOptions {
  ExpectationMethod method = ExpectationMethod::analytic_erf;
  int quadrature_order = 32;          // nodes per dimension
  std::size_t mc_draws = 200000;      // antithetic pairs count as two draws
  std::uint64_t mc_seed = 0x5eed;
};

// Symmetric PSD Gram matrix over an input set whose first `train_count`
// columns are training inputs and the rest test inputs.
class KernelMatrix {
 public:
  KernelMatrix(Eigen::MatrixXd values, int train_count, KernelFlavor flavor);

  [[nodiscard]] const Eigen::MatrixXd& values() const { return values_; }
  [[nodiscard]] int size() const { return static_cast<int>(values_.rows()); }
  [[nodiscard]] int train_count() const { return train_count_; }
  [[nodiscard]] int test_count() const { return size() - train_count_; }
  [[nodiscard]] KernelFlavor flavor() const { return flavor_; }

  [[nodiscard]] Eigen::MatrixXd train_block() const;
  [[nodiscard]] Eigen::MatrixXd test_block() const;
  // test x train
  [[nodiscard]] Eigen::MatrixXd cross_block() const;

 private:
  Eigen::MatrixXd values_;
  int train_count_;
  KernelFlavor flavor_;
};

// E[phi(u) phi(v)] for (u, v) ~ N(0, [[k11, k12], [k12, k22]]). Throws
// NumericalError when the 2x2 block is indefinite beyond rounding.
double activation_expectation(Activation act, double k11, double k12, double k22, const KernelOptions& opts,
                              RngStream* rng = nullptr);

// Closed form for erf: (2/pi) asin(2 k12 / sqrt((1 + 2 k11)(1 + 2 k22))).
double erf_expectation(double k11, double k12, double k22);

// Probabilists' Gauss-Hermite rule (weight exp(-x^2/2) / sqrt(2 pi)); the
// weights sum to one.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_hermite_rule(int order);

// K^(L) over all input pairs via the layer recursion. inputs is d_in x m.
KernelMatrix kernel_recursion(const Architecture& arch, const VarianceVector& vars, const Eigen::MatrixXd& inputs,
                              const KernelOptions& opts = {}, std::optional<int> train_count = std::nullopt);

// K' = K computed with unit last-layer variances.
KernelMatrix rescaled_kernel(const Architecture& arch, const VarianceVector& vars, const Eigen::MatrixXd& inputs,
                             const KernelOptions& opts = {}, std::optional<int> train_count = std::nullopt);

// analytic_erf when every post-input activation is erf, otherwise gauss_hermite.
KernelOptions default_kernel_options(const Architecture& arch);

double operator_norm(const KernelMatrix& kernel);
double operator_norm(const Eigen::MatrixXd& symmetric);

struct ConstraintReport {
  double a = 0.0;
  double b = 0.0;
  double epsilon = 0.0;
  double op_norm = 0.0;
  double y_norm_sq = 0.0;
  double b_lower_bound = 0.0;
  bool a_ok = false;
  bool b_ok = false;
  [[nodiscard]] bool satisfied() const { return a_ok && b_ok; }
};

// a > 1/2 and b > (1 + (eps + 2) / (2 eps + 2)) ||y||_F^2 for eps < 1/||K'||_op.
// With no epsilon, eps = 0.99 / ||K'||_op.
ConstraintReport check_hyperparams(double a, double b, const Eigen::MatrixXd& y, const KernelMatrix& kprime_train,
                                   std::optional<double> epsilon = std::nullopt);

}  // namespace tpbnn
