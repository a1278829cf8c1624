#include "tpbnn/nngp_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tpbnn/errors.hpp"
#include "tpbnn/linalg.hpp"

namespace tpbnn {

// --- KernelMatrix ----------------------------------------------------------

KernelMatrix::KernelMatrix(Eigen::MatrixXd values, int train_count, KernelFlavor flavor)
    : values_(std::move(values)), train_count_(train_count), flavor_(flavor) {
  if (values_.rows() != values_.cols()) throw DimensionError("kernel matrix must be square");
  if (train_count_ < 0 || train_count_ > values_.rows()) throw DimensionError("train partition out of range");
  if (values_.size() == 0) return;
  const double scale = std::max(values_.cwiseAbs().maxCoeff(), 1.0);
  if ((values_ - values_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("kernel matrix is not symmetric");
  values_ = 0.5 * (values_ + values_.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(values_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NumericalError("kernel matrix is not positive semi-definite");
  if (flavor_ == KernelFlavor::rescaled && (values_.diagonal().array() < 1.0 - 1e-9).any())
    throw NumericalError("rescaled kernel must have diagonal entries >= 1");
}

Eigen::MatrixXd KernelMatrix::train_block() const {
  return values_.topLeftCorner(train_count_, train_count_);
}

Eigen::MatrixXd KernelMatrix::test_block() const {
  return values_.bottomRightCorner(test_count(), test_count());
}

Eigen::MatrixXd KernelMatrix::cross_block() const {
  return values_.bottomLeftCorner(test_count(), train_count_);
}

// --- Layer expectation -----------------------------------------------------

double erf_expectation(double k11, double k12, double k22) {
  const double denom = std::sqrt((1.0 + 2.0 * k11) * (1.0 + 2.0 * k22));
  const double arg = std::clamp(2.0 * k12 / denom, -1.0, 1.0);
  return 2.0 / std::numbers::pi * std::asin(arg);
}

QuadratureRule gauss_hermite_rule(int order) {
  if (order < 1) throw DomainError("quadrature order must be >= 1");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    jacobi(i, i - 1) = std::sqrt(static_cast<double>(i));
    jacobi(i - 1, i) = jacobi(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    rule.nodes[i] = eig.eigenvalues()[i];
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  return rule;
}

namespace {

struct Chol2 {
  double l11, l21, l22;
};

Chol2 cholesky_2x2(double k11, double k12, double k22) {
  const double scale = std::max({std::abs(k11), std::abs(k22), 1e-300});
  constexpr double tol = 1e-9;
  if (k11 < -tol * scale || k22 < -tol * scale || k12 * k12 - k11 * k22 > tol * scale * scale)
    throw NumericalError("previous-layer 2x2 kernel block is not positive semi-definite (k11=" +
                         std::to_string(k11) + ", k12=" + std::to_string(k12) + ", k22=" + std::to_string(k22) +
                         ")");
  Chol2 c{};
  c.l11 = std::sqrt(std::max(k11, 0.0));
  if (c.l11 > 0.0) {
    c.l21 = k12 / c.l11;
    c.l22 = std::sqrt(std::max(k22 - c.l21 * c.l21, 0.0));
  } else {
    c.l21 = 0.0;
    c.l22 = std::sqrt(std::max(k22, 0.0));
  }
  return c;
}

double quadrature_expectation(Activation act, const Chol2& c, const QuadratureRule& rule) {
  double total = 0.0;
  const std::size_t n = rule.nodes.size();
  for (std::size_t a = 0; a < n; ++a) {
    const double za = rule.nodes[a];
    const double fu = apply_activation(act, c.l11 * za);
    const double base = c.l21 * za;
    double inner = 0.0;
    for (std::size_t b = 0; b < n; ++b) inner += rule.weights[b] * apply_activation(act, base + c.l22 * rule.nodes[b]);
    total += rule.weights[a] * fu * inner;
  }
  return total;
}

double monte_carlo_expectation(Activation act, const Chol2& c, std::size_t draws, RngStream& rng) {
  const std::size_t pairs = std::max<std::size_t>(draws / 2, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double u = c.l11 * z1;
    const double v = c.l21 * z1 + c.l22 * z2;
    total += apply_activation(act, u) * apply_activation(act, v) +
             apply_activation(act, -u) * apply_activation(act, -v);
  }
  return total / (2.0 * static_cast<double>(pairs));
}

}  // namespace

double activation_expectation(Activation act, double k11, double k12, double k22, const KernelOptions& opts,
                              RngStream* rng) {
  const Chol2 c = cholesky_2x2(k11, k12, k22);
  if (act == Activation::identity) return k12;
  switch (opts.method) {
    case ExpectationMethod::analytic_erf:
      if (act != Activation::erf) throw DomainError("analytic_erf requires erf activations");
      return erf_expectation(k11, k12, k22);
    case ExpectationMethod::gauss_hermite:
      return quadrature_expectation(act, c, gauss_hermite_rule(opts.quadrature_order));
    case ExpectationMethod::monte_carlo: {
      RngStream local(opts.mc_seed);
      return monte_carlo_expectation(act, c, opts.mc_draws, rng ? *rng : local);
    }
  }
  return 0.0;
}

// --- Recursion -------------------------------------------------------------

namespace {

Eigen::MatrixXd recursion_values(const Architecture& arch, const VarianceVector& vars, const Eigen::MatrixXd& inputs,
                                 const KernelOptions& opts) {
  if (vars.depth() != arch.depth()) throw DimensionError("variance vector depth does not match architecture");
  if (inputs.rows() != arch.input_dim()) throw DimensionError("kernel inputs must have n_0 rows");
  if (opts.method == ExpectationMethod::analytic_erf) {
    for (int l = 2; l <= arch.depth(); ++l)
      if (arch.activation(l) != Activation::erf && arch.activation(l) != Activation::identity)
        throw DomainError("analytic_erf requires erf activations at layers 2..L");
  }
  const Eigen::Index m = inputs.cols();
  Eigen::MatrixXd k = vars.weight(1) * (inputs.transpose() * inputs) / static_cast<double>(arch.input_dim());
  k.array() += vars.bias(1);

  QuadratureRule rule;
  if (opts.method == ExpectationMethod::gauss_hermite) rule = gauss_hermite_rule(opts.quadrature_order);
  const RngStream root(opts.mc_seed);

  for (int l = 2; l <= arch.depth(); ++l) {
    const Activation act = arch.activation(l);
    Eigen::MatrixXd next(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const Chol2 c = cholesky_2x2(k(i, i), k(i, j), k(j, j));
        double e;
        if (act == Activation::identity) {
          e = k(i, j);
        } else if (opts.method == ExpectationMethod::analytic_erf) {
          e = erf_expectation(k(i, i), k(i, j), k(j, j));
        } else if (opts.method == ExpectationMethod::gauss_hermite) {
          e = quadrature_expectation(act, c, rule);
        } else {
          RngStream rng = root.substream((static_cast<std::uint64_t>(l) << 48) ^
                                         (static_cast<std::uint64_t>(i) << 24) ^ static_cast<std::uint64_t>(j));
          e = monte_carlo_expectation(act, c, opts.mc_draws, rng);
        }
        next(i, j) = next(j, i) = vars.weight(l) * e + vars.bias(l);
      }
    }
    k = std::move(next);
  }
  return k;
}

}  // namespace

KernelMatrix kernel_recursion(const Architecture& arch, const VarianceVector& vars, const Eigen::MatrixXd& inputs,
                              const KernelOptions& opts, std::optional<int> train_count) {
  Eigen::MatrixXd k = repair_psd(recursion_values(arch, vars, inputs, opts));
  return KernelMatrix(std::move(k), train_count.value_or(static_cast<int>(inputs.cols())), KernelFlavor::full);
}

KernelMatrix rescaled_kernel(const Architecture& arch, const VarianceVector& vars, const Eigen::MatrixXd& inputs,
                             const KernelOptions& opts, std::optional<int> train_count) {
  Eigen::MatrixXd k = repair_psd(recursion_values(arch, vars.with_last_layer(1.0), inputs, opts));
  return KernelMatrix(std::move(k), train_count.value_or(static_cast<int>(inputs.cols())), KernelFlavor::rescaled);
}

KernelOptions default_kernel_options(const Architecture& arch) {
  KernelOptions opts;
  for (int l = 2; l <= arch.depth(); ++l)
    if (arch.activation(l) != Activation::erf && arch.activation(l) != Activation::identity)
      opts.method = ExpectationMethod::gauss_hermite;
  return opts;
}

double operator_norm(const Eigen::MatrixXd& symmetric) { return largest_eigenvalue(symmetric); }

double operator_norm(const KernelMatrix& kernel) { return largest_eigenvalue(kernel.values()); }

ConstraintReport check_hyperparams(double a, double b, const Eigen::MatrixXd& y, const KernelMatrix& kprime_train,
                                   std::optional<double> epsilon) {
  ConstraintReport r;
  r.a = a;
  r.b = b;
  r.op_norm = operator_norm(kprime_train.train_block());
  if (!(r.op_norm > 0.0)) throw NumericalError("K' has a non-positive operator norm");
  const double limit = 1.0 / r.op_norm;
  r.epsilon = epsilon.value_or(0.99 * limit);
  if (!(r.epsilon > 0.0) || r.epsilon >= limit)
    throw DomainError("epsilon must lie in (0, 1/||K'||_op) = (0, " + std::to_string(limit) + ")");
  r.y_norm_sq = y.squaredNorm();
  r.b_lower_bound = (1.0 + (r.epsilon + 2.0) / (2.0 * r.epsilon + 2.0)) * r.y_norm_sq;
  r.a_ok = a > 0.5;
  r.b_ok = b > r.b_lower_bound;
  return r;
}

}  // namespace tpbnn
