#include "tpbnn/samplers.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "tpbnn/errors.hpp"
#include "tpbnn/linalg.hpp"

namespace tpbnn {
namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(name) + " must be positive and finite");
}

Eigen::VectorXd standard_normal(Eigen::Index n, RngStream& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov, Eigen::Index dim) {
  if (cov.rows() != dim || cov.cols() != dim) throw DimensionError("covariance must be dim x dim");
  return psd_square_root(cov);
}

}  // namespace

double sample_inverse_gamma(double a, double b, RngStream& rng) {
  require_positive(a, "inverse-gamma shape");
  require_positive(b, "inverse-gamma rate");
  return b / rng.gamma(a);
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, RngStream& rng) {
  if (cov.size() > 0 && cov.cwiseAbs().maxCoeff() == 0.0) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw DimensionError("covariance must be dim x dim");
    return mean;
  }
  const Eigen::MatrixXd s = covariance_factor(cov, mean.size());
  return mean + s * standard_normal(mean.size(), rng);
}

Eigen::VectorXd sample_mvt(double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, RngStream& rng) {
  require_positive(nu, "degrees of freedom");
  const Eigen::MatrixXd s = covariance_factor(sigma, mu.size());
  const double scale = sample_inverse_gamma(0.5 * nu, 0.5 * nu, rng);
  return mu + std::sqrt(scale) * (s * standard_normal(mu.size(), rng));
}

Eigen::MatrixXd sample_mvn_rows(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int n, RngStream& rng) {
  const Eigen::MatrixXd s = covariance_factor(cov, mean.size());
  Eigen::MatrixXd out(n, mean.size());
  for (int i = 0; i < n; ++i) out.row(i) = (mean + s * standard_normal(mean.size(), rng)).transpose();
  return out;
}

Eigen::MatrixXd sample_mvt_rows(double nu, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int n,
                                RngStream& rng) {
  require_positive(nu, "degrees of freedom");
  const Eigen::MatrixXd s = covariance_factor(sigma, mu.size());
  Eigen::MatrixXd out(n, mu.size());
  for (int i = 0; i < n; ++i) {
    const double scale = sample_inverse_gamma(0.5 * nu, 0.5 * nu, rng);
    out.row(i) = (mu + std::sqrt(scale) * (s * standard_normal(mu.size(), rng))).transpose();
  }
  return out;
}

Sigma2ConditionalParams conditional_sigma2_params(double a, double b, const Architecture& arch,
                                                  const ParamVector& params, const Dataset& data,
                                                  Sigma2Parameterization param, double likelihood_scale) {
  require_positive(a, "a");
  require_positive(b, "b");
  require_positive(likelihood_scale, "likelihood scale");
  if (params.size() != arch.param_count()) throw DimensionError("parameter vector does not match architecture");
  if (data.y().rows() != arch.output_dim() || data.x().rows() != arch.input_dim())
    throw DimensionError("dataset does not match architecture");
  const int depth = arch.depth();
  const double n_out = arch.width(depth);
  const double n_prev = arch.width(depth - 1);
  const double k = data.size();
  const Eigen::MatrixXd& y = data.y();

  Sigma2ConditionalParams p;
  if (param == Sigma2Parameterization::non_centered) {
    p.a = a + 0.5 * n_out * k;
    p.b = b + 0.5 * y.squaredNorm() / likelihood_scale;
    if (data.size() > 0) {
      const Eigen::MatrixXd f = forward(arch, params, data.x());
      p.c = (y.array() * f.array()).sum() / likelihood_scale;
    }
    return p;
  }
  p.a = a + 0.5 * (n_prev + k + 1.0) * n_out;
  double residual = 0.0;
  if (data.size() > 0) residual = (y - forward(arch, params, data.x())).squaredNorm();
  p.b = b + 0.5 * (n_prev * params.weight(depth).squaredNorm() + params.bias(depth).squaredNorm() +
                   residual / likelihood_scale);
  p.c = 0.0;
  return p;
}

double sigma2_conditional_log_density(const Sigma2ConditionalParams& p, double x) {
  if (!(x > 0.0)) return -INFINITY;
  return -(p.a + 1.0) * std::log(x) - p.b / x + p.c / std::sqrt(x);
}

double sigma2_transformed_log_density(const Sigma2ConditionalParams& p, double y) {
  if (!(y > 0.0)) return -INFINITY;
  return (2.0 * p.a - 1.0) * std::log(y) - p.b * y * y + p.c * y;
}

double sample_sigma2_conditional(const Sigma2ConditionalParams& p, RngStream& rng, Sigma2SamplerStats* stats,
                                 long budget) {
  require_positive(p.a, "a'");
  require_positive(p.b, "b'");
  if (!std::isfinite(p.c)) throw DomainError("c' must be finite");
  Sigma2SamplerStats local;
  Sigma2SamplerStats& st = stats ? *stats : local;

  // Gamma(2a', 2b'y0 - c') envelope: target / proposal ∝ exp(-b'(y - y0)^2) <= 1.
  auto gamma_envelope = [&]() -> double {
    const double y0 = (p.c + std::sqrt(p.c * p.c + 16.0 * p.a * p.b)) / (4.0 * p.b);
    const double rate = 2.0 * p.b * y0 - p.c;
    for (long i = 0; i < budget; ++i) {
      ++st.proposals;
      const double y = rng.gamma(2.0 * p.a) / rate;
      const double d = y - y0;
      if (y > 0.0 && rng.uniform() <= std::exp(-p.b * d * d)) return y;
    }
    return -1.0;
  };

  // For a' > 1/2 the log density is concave with curvature <= -2b', so
  // N(mode, 1/(2b')) dominates it after scaling by the value at the mode.
  auto gaussian_envelope = [&]() -> double {
    if (p.a <= 0.5) return -1.0;
    const double mode = (p.c + std::sqrt(p.c * p.c + 8.0 * p.b * (2.0 * p.a - 1.0))) / (4.0 * p.b);
    const double h_mode = sigma2_transformed_log_density(p, mode);
    const double sd = 1.0 / std::sqrt(2.0 * p.b);
    for (long i = 0; i < budget; ++i) {
      ++st.proposals;
      const double y = mode + sd * rng.normal();
      if (y <= 0.0) continue;
      const double d = y - mode;
      const double log_ratio = sigma2_transformed_log_density(p, y) - h_mode + p.b * d * d;
      if (std::log(rng.uniform()) <= log_ratio) return y;
    }
    return -1.0;
  };

  const bool linear_dominates = p.c > 0.0 && p.c * p.c > 16.0 * p.a * p.b;
  double y = linear_dominates ? gaussian_envelope() : gamma_envelope();
  if (y <= 0.0) {
    st.used_fallback = true;
    y = linear_dominates ? gamma_envelope() : gaussian_envelope();
  }
  if (y <= 0.0) {
    std::ostringstream msg;
    msg << "sigma2 conditional sampler exhausted its budget (a'=" << p.a << ", b'=" << p.b << ", c'=" << p.c
        << ", proposals=" << st.proposals << ")";
    throw NumericalError(msg.str());
  }
  return 1.0 / (y * y);
}

}  // namespace tpbnn
