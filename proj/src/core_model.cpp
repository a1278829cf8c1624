#include "tpbnn/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tpbnn/errors.hpp"

namespace tpbnn {

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::erf: return std::erf(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double activation_derivative(Activation act, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::erf: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "erf") return Activation::erf;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::erf: return "erf";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

// --- Architecture ----------------------------------------------------------

Architecture::Architecture(std::vector<int> widths, std::vector<Activation> activations)
    : widths_(std::move(widths)), activations_(std::move(activations)) {
  if (widths_.size() < 3) throw DomainError("architecture needs L >= 2 (at least three widths)");
  if (activations_.size() + 1 != widths_.size())
    throw DimensionError("architecture needs exactly one activation per layer");
  for (int w : widths_)
    if (w < 1) throw DomainError("layer widths must be >= 1");
  if (activations_.front() != Activation::identity)
    throw DomainError("the first activation must be identity");
}

Architecture Architecture::uniform(int input_dim, int hidden_width, int hidden_layers, int output_dim,
                                   Activation hidden_activation) {
  if (hidden_layers < 1) throw DomainError("need at least one hidden layer");
  std::vector<int> widths{input_dim};
  std::vector<Activation> acts{Activation::identity};
  for (int i = 0; i < hidden_layers; ++i) {
    widths.push_back(hidden_width);
    acts.push_back(hidden_activation);
  }
  widths.push_back(output_dim);
  return Architecture(std::move(widths), std::move(acts));
}

int Architecture::width(int layer) const { return widths_.at(layer); }

Activation Architecture::activation(int layer) const { return activations_.at(layer - 1); }

int Architecture::min_hidden_width() const {
  int out = widths_[1];
  for (int l = 1; l < depth(); ++l) out = std::min(out, widths_[l]);
  return out;
}

std::size_t Architecture::param_count() const {
  std::size_t t = 0;
  for (int l = 1; l <= depth(); ++l)
    t += static_cast<std::size_t>(widths_[l]) * (static_cast<std::size_t>(widths_[l - 1]) + 1);
  return t;
}

// --- VarianceVector --------------------------------------------------------

VarianceVector::VarianceVector(std::vector<double> weight, std::vector<double> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.size() != bias_.size() || weight_.empty())
    throw DimensionError("weight and bias variance lists must have equal, nonzero length");
  for (double v : weight_)
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("weight variances must be positive");
  for (double v : bias_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("bias variances must be non-negative");
}

VarianceVector VarianceVector::uniform(int depth, double weight, double bias) {
  return VarianceVector(std::vector<double>(depth, weight), std::vector<double>(depth, bias));
}

VarianceVector VarianceVector::with_last_layer(double sigma2) const {
  if (!(sigma2 > 0.0)) throw DomainError("last-layer variance must be positive");
  VarianceVector out = *this;
  out.weight_.back() = sigma2;
  out.bias_.back() = sigma2;
  return out;
}

void VarianceVector::require_strictly_positive() const {
  for (double v : bias_)
    if (!(v > 0.0)) throw DomainError("bias variances must be strictly positive here");
}

// --- ParamVector -----------------------------------------------------------

ParamVector::ParamVector(const Architecture& arch) : ParamVector(arch, Eigen::VectorXd::Zero(arch.param_count())) {}

ParamVector::ParamVector(const Architecture& arch, Eigen::VectorXd values) : values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != arch.param_count())
    throw DimensionError("parameter vector length " + std::to_string(values_.size()) +
                         " does not match architecture (" + std::to_string(arch.param_count()) + ")");
  std::size_t offset = 0;
  for (int l = 1; l <= arch.depth(); ++l) {
    ParamBlock w{offset, arch.width(l), arch.width(l - 1)};
    offset += w.size();
    ParamBlock b{offset, arch.width(l), 1};
    offset += b.size();
    weights_.push_back(w);
    biases_.push_back(b);
  }
}

Eigen::Map<const RowMajorMatrix> ParamVector::weight(int layer) const {
  const ParamBlock& blk = weight_block(layer);
  return {values_.data() + blk.offset, blk.rows, blk.cols};
}

Eigen::Map<RowMajorMatrix> ParamVector::weight(int layer) {
  const ParamBlock& blk = weight_block(layer);
  return {values_.data() + blk.offset, blk.rows, blk.cols};
}

Eigen::Map<const Eigen::VectorXd> ParamVector::bias(int layer) const {
  const ParamBlock& blk = bias_block(layer);
  return {values_.data() + blk.offset, blk.rows};
}

Eigen::Map<Eigen::VectorXd> ParamVector::bias(int layer) {
  const ParamBlock& blk = bias_block(layer);
  return {values_.data() + blk.offset, blk.rows};
}

// --- Dataset ---------------------------------------------------------------

Dataset::Dataset(Eigen::MatrixXd x, Eigen::MatrixXd y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.cols() != y_.cols()) throw DimensionError("dataset x and y must have the same number of columns");
}

Dataset Dataset::empty(int input_dim, int output_dim) {
  return Dataset(Eigen::MatrixXd(input_dim, 0), Eigen::MatrixXd(output_dim, 0));
}

// --- Prior -----------------------------------------------------------------

Eigen::VectorXd prior_standard_deviations(const Architecture& arch, const VarianceVector& vars) {
  if (vars.depth() != arch.depth()) throw DimensionError("variance vector depth does not match architecture");
  Eigen::VectorXd sd(arch.param_count());
  std::size_t offset = 0;
  for (int l = 1; l <= arch.depth(); ++l) {
    const std::size_t n_w = static_cast<std::size_t>(arch.width(l)) * arch.width(l - 1);
    sd.segment(offset, n_w).setConstant(std::sqrt(vars.weight(l) / arch.width(l - 1)));
    offset += n_w;
    sd.segment(offset, arch.width(l)).setConstant(std::sqrt(vars.bias(l)));
    offset += arch.width(l);
  }
  return sd;
}

ParamVector sample_prior_params(const Architecture& arch, const VarianceVector& vars,
                                std::optional<double> sigma2, RngStream& rng) {
  const VarianceVector effective = sigma2 ? vars.with_last_layer(*sigma2) : vars;
  effective.require_strictly_positive();
  const Eigen::VectorXd sd = prior_standard_deviations(arch, effective);
  Eigen::VectorXd theta(sd.size());
  for (Eigen::Index i = 0; i < sd.size(); ++i) theta[i] = sd[i] * rng.normal();
  return ParamVector(arch, std::move(theta));
}

double log_prior(const Architecture& arch, const VarianceVector& vars, const ParamVector& params) {
  vars.require_strictly_positive();
  const Eigen::VectorXd sd = prior_standard_deviations(arch, vars);
  const Eigen::ArrayXd z = params.values().array() / sd.array();
  return -0.5 * z.square().sum() - sd.array().log().sum() -
         0.5 * static_cast<double>(sd.size()) * std::log(2.0 * std::numbers::pi);
}

// --- Forward / likelihood --------------------------------------------------

namespace {

// Activations fed to each layer, kept for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;   // f^(l-1), l = 1..L
  std::vector<Eigen::MatrixXd> act;   // phi_l(f^(l-1))
  Eigen::MatrixXd output;
};

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& m) {
  if (act == Activation::identity) return m;
  return m.unaryExpr([act](double v) { return apply_activation(act, v); });
}

ForwardTrace trace_forward(const Architecture& arch, const ParamVector& params, const Eigen::MatrixXd& inputs,
                           bool keep) {
  if (params.size() != arch.param_count()) throw DimensionError("parameter vector does not match architecture");
  if (inputs.rows() != arch.input_dim())
    throw DimensionError("input row count " + std::to_string(inputs.rows()) + " != n_0 = " +
                         std::to_string(arch.input_dim()));
  ForwardTrace tr;
  Eigen::MatrixXd h = inputs;
  for (int l = 1; l <= arch.depth(); ++l) {
    Eigen::MatrixXd a = activate(arch.activation(l), h);
    Eigen::MatrixXd next = params.weight(l) * a;
    next.colwise() += params.bias(l);
    if (keep) {
      tr.pre.push_back(std::move(h));
      tr.act.push_back(std::move(a));
    }
    h = std::move(next);
  }
  tr.output = std::move(h);
  return tr;
}

}  // namespace

Eigen::MatrixXd forward(const Architecture& arch, const ParamVector& params, const Eigen::MatrixXd& inputs) {
  return trace_forward(arch, params, inputs, false).output;
}

double log_likelihood(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& y, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("likelihood variance must be positive");
  if (outputs.rows() != y.rows() || outputs.cols() != y.cols())
    throw DimensionError("outputs and targets must have the same shape");
  const double n = static_cast<double>(y.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - (y - outputs).squaredNorm() / (2.0 * sigma2);
}

double log_likelihood_and_gradient(const Architecture& arch, const ParamVector& params, const Dataset& data,
                                   double noise_var, Eigen::VectorXd* grad) {
  if (!(noise_var > 0.0)) throw DomainError("likelihood variance must be positive");
  if (data.x().rows() != arch.input_dim() || data.y().rows() != arch.output_dim())
    throw DimensionError("dataset dimensions do not match architecture");
  if (grad) grad->setZero(static_cast<Eigen::Index>(arch.param_count()));
  if (data.size() == 0) return 0.0;

  ForwardTrace tr = trace_forward(arch, params, data.x(), grad != nullptr);
  const double value = log_likelihood(tr.output, data.y(), noise_var);
  if (!grad) return value;

  // delta = d loglik / d f^(l), starting from the output.
  Eigen::MatrixXd delta = (data.y() - tr.output) / noise_var;
  ParamVector g(arch, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count())));
  for (int l = arch.depth(); l >= 1; --l) {
    const Eigen::MatrixXd& a = tr.act[l - 1];
    g.weight(l).noalias() = delta * a.transpose();
    g.bias(l) = delta.rowwise().sum();
    if (l == 1) break;
    Eigen::MatrixXd back = params.weight(l).transpose() * delta;
    const Activation act = arch.activation(l);
    if (act != Activation::identity) {
      const Eigen::MatrixXd& h = tr.pre[l - 1];
      back.array() *= h.unaryExpr([act](double v) { return activation_derivative(act, v); }).array();
    }
    delta = std::move(back);
  }
  *grad = std::move(g.values());
  return value;
}

double log_posterior_and_gradient(const Architecture& arch, const VarianceVector& prior_vars,
                                  const ParamVector& params, const Dataset& data, double noise_var,
                                  Eigen::VectorXd* grad) {
  prior_vars.require_strictly_positive();
  const double lik = log_likelihood_and_gradient(arch, params, data, noise_var, grad);
  const Eigen::VectorXd sd = prior_standard_deviations(arch, prior_vars);
  if (grad) grad->array() -= params.values().array() / sd.array().square();
  return lik + log_prior(arch, prior_vars, params);
}

Eigen::VectorXd grad_log_posterior_theta(const Architecture& arch, const VarianceVector& vars,
                                         const ParamVector& params, double sigma2, const Dataset& data) {
  if (!(sigma2 > 0.0)) throw DomainError("sigma2 must be positive");
  Eigen::VectorXd grad;
  log_posterior_and_gradient(arch, vars.with_last_layer(sigma2), params, data, sigma2, &grad);
  return grad;
}

}  // namespace tpbnn
