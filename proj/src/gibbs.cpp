#include "tpbnn/gibbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "tpbnn/errors.hpp"
#include "tpbnn/log.hpp"

namespace tpbnn {
namespace {

void check_shapes(const Architecture& arch, const Dataset& data, const Eigen::MatrixXd& test_inputs) {
  if (data.x().rows() != arch.input_dim() || data.y().rows() != arch.output_dim())
    throw DimensionError("dataset does not match architecture");
  if (test_inputs.cols() > 0 && test_inputs.rows() != arch.input_dim())
    throw DimensionError("test inputs must have n_0 rows");
  if (test_inputs.cols() > 0 && arch.output_dim() != 1)
    throw DimensionError("posterior evaluations require a single output");
}

Eigen::VectorXd standard_normal(std::size_t n, RngStream& rng) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return z;
}

// Coordinates whose prior is N(0, I): theta = sd .* z.
LogDensityFn whitened_density(const Architecture& arch, const Eigen::VectorXd& sd, const Dataset& data,
                              double noise_var) {
  return [&arch, sd, &data, noise_var](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    ParamVector theta(arch, sd.cwiseProduct(z));
    Eigen::VectorXd g;
    const double lik = log_likelihood_and_gradient(arch, theta, data, noise_var, grad ? &g : nullptr);
    if (grad) *grad = sd.cwiseProduct(g) - z;
    return lik - 0.5 * z.squaredNorm();
  };
}

std::optional<ConstraintReport> constraint_report(const Architecture& arch, const VarianceVector& vars, double a,
                                                  double b, const Dataset& data) {
  if (data.size() == 0) return std::nullopt;
  try {
    const KernelMatrix kp = rescaled_kernel(arch, vars, data.x(), default_kernel_options(arch));
    ConstraintReport r = check_hyperparams(a, b, data.y(), kp);
    if (!r.satisfied()) {
      std::ostringstream msg;
      msg << "hyperparameter constraint not met (a=" << a << ", b=" << b << ", required b > " << r.b_lower_bound
          << "); sampling proceeds";
      log_warning(msg.str());
    }
    return r;
  } catch (const std::exception& e) {
    log_warning(std::string("could not evaluate the hyperparameter constraint: ") + e.what());
    return std::nullopt;
  }
}

struct ChainTally {
  double accept = 0.0;
  long transitions = 0;
  long divergences = 0;
  double depth = 0.0;
  double leapfrogs = 0.0;

  void add(const NutsTransition& t) {
    accept += t.accept_stat;
    depth += t.tree_depth;
    leapfrogs += t.leapfrog_steps;
    ++transitions;
    divergences += t.divergent ? 1 : 0;
  }
};

void finish_diagnostics(GibbsDiagnostics& d, const ChainTally& tally, const std::vector<double>& sigma2,
                        double step_size, std::chrono::steady_clock::time_point start) {
  d.transitions = tally.transitions;
  d.divergences = tally.divergences;
  d.mean_accept = tally.transitions > 0 ? tally.accept / static_cast<double>(tally.transitions) : 0.0;
  d.step_size = step_size;
  if (tally.transitions > 0) {
    d.mean_tree_depth = tally.depth / static_cast<double>(tally.transitions);
    d.mean_leapfrog_steps = tally.leapfrogs / static_cast<double>(tally.transitions);
  }
  if (!sigma2.empty()) {
    d.sigma2_min = *std::min_element(sigma2.begin(), sigma2.end());
    d.sigma2_max = *std::max_element(sigma2.begin(), sigma2.end());
    double s = 0.0;
    for (double v : sigma2) s += v;
    d.sigma2_mean = s / static_cast<double>(sigma2.size());
  }
  d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (tally.transitions > 0 && 2 * tally.divergences > tally.transitions) {
    std::ostringstream msg;
    msg << "persistent HMC divergence: " << tally.divergences << " of " << tally.transitions
        << " transitions diverged (step size " << step_size << ", mean acceptance " << d.mean_accept << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

void GibbsConfig::validate() const {
  if (iterations < 1) throw DomainError("Gibbs iterations must be >= 1");
  if (burn_in < 0 || burn_in >= iterations) throw DomainError("burn-in must lie in [0, iterations)");
  if (thin < 1) throw DomainError("thinning must be >= 1");
  if (hmc_steps_per_iteration < 1) throw DomainError("HMC steps per iteration must be >= 1");
  if (initial_sigma2 && !(*initial_sigma2 > 0.0)) throw DomainError("initial sigma2 must be positive");
  if (!(likelihood_scale > 0.0)) throw DomainError("likelihood scale must be positive");
  hmc.validate();
}

int GibbsConfig::retained_count() const { return (iterations - burn_in + thin - 1) / thin; }

PosteriorSamples gibbs_run(const Architecture& arch, const VarianceVector& vars, double a, double b,
                           const Dataset& data, const Eigen::MatrixXd& test_inputs, const GibbsConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("a and b must be positive");
  vars.require_strictly_positive();
  check_shapes(arch, data, test_inputs);

  PosteriorSamples out;
  out.diagnostics.constraint = constraint_report(arch, vars, a, b, data);

  RngStream rng(cfg.seed, 0x61bb5);
  const bool non_centered = cfg.parameterization == Sigma2Parameterization::non_centered;
  const int depth = arch.depth();
  const ParamVector layout(arch);
  const std::size_t last_begin = layout.weight_block(depth).offset;

  double sigma2 = cfg.initial_sigma2 ? *cfg.initial_sigma2 : sample_inverse_gamma(a, b, rng);
  // z is the whitened state; with non_centered it stays put when sigma2 moves.
  Eigen::VectorXd z = standard_normal(arch.param_count(), rng);
  const Eigen::VectorXd unit_sd = prior_standard_deviations(arch, vars.with_last_layer(1.0));

  std::optional<NutsSampler> sampler;
  ChainTally tally;
  Sigma2SamplerStats s2stats;
  const int retained = cfg.retained_count();
  if (cfg.keep_params) out.theta.reserve(static_cast<std::size_t>(retained));
  out.sigma2.reserve(static_cast<std::size_t>(retained));
  out.evaluations.resize(retained, test_inputs.cols());
  int row = 0;

  auto actual_theta = [&](const Eigen::VectorXd& zz, double s2) {
    Eigen::VectorXd theta = unit_sd.cwiseProduct(zz);
    theta.tail(theta.size() - static_cast<Eigen::Index>(last_begin)) *= std::sqrt(s2);
    return ParamVector(arch, std::move(theta));
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const bool adapting = it < cfg.burn_in;
    const double sigma = std::sqrt(sigma2);
    // theta | sigma2, D
    {
      Dataset scaled = non_centered ? Dataset(data.x(), data.y() / sigma) : data;
      const double noise = non_centered ? cfg.likelihood_scale : cfg.likelihood_scale * sigma2;
      Eigen::VectorXd sd = unit_sd;
      if (!non_centered) sd.tail(sd.size() - static_cast<Eigen::Index>(last_begin)) *= sigma;
      LogDensityFn density = whitened_density(arch, sd, scaled, noise);
      if (!sampler) {
        sampler.emplace(density, cfg.hmc);
        sampler->initialize_step_size(z, rng);
      } else {
        sampler->set_log_density(density);
      }
      for (int s = 0; s < cfg.hmc_steps_per_iteration; ++s) {
        const NutsTransition t = sampler->transition(z, rng);
        if (adapting) sampler->adapt(t.accept_stat);
        else tally.add(t);
      }
      if (it + 1 == cfg.burn_in) sampler->finish_adaptation();
    }
    // sigma2 | theta, D
    {
      if (non_centered) {
        ParamVector unit(arch, unit_sd.cwiseProduct(z));
        const Sigma2ConditionalParams p =
            conditional_sigma2_params(a, b, arch, unit, data, Sigma2Parameterization::non_centered, cfg.likelihood_scale);
        sigma2 = sample_sigma2_conditional(p, rng, &s2stats);
      } else {
        const ParamVector theta = actual_theta(z, sigma2);
        const Sigma2ConditionalParams p =
            conditional_sigma2_params(a, b, arch, theta, data, Sigma2Parameterization::centered, cfg.likelihood_scale);
        const double next = sample_sigma2_conditional(p, rng, &s2stats);
        // keep theta fixed: rewhiten the last layer at the new scale
        z.tail(z.size() - static_cast<Eigen::Index>(last_begin)) *= std::sqrt(sigma2 / next);
        sigma2 = next;
      }
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
      const ParamVector theta = actual_theta(z, sigma2);
      if (test_inputs.cols() > 0) out.evaluations.row(row) = forward(arch, theta, test_inputs).row(0);
      if (cfg.keep_params) out.theta.push_back(theta);
      out.sigma2.push_back(sigma2);
      ++row;
    }
  }
  out.diagnostics.sigma2_proposals = s2stats.proposals;
  finish_diagnostics(out.diagnostics, tally, out.sigma2, sampler ? sampler->step_size() : 0.0, start);
  return out;
}

PosteriorSamples gibbs_run_fixed_variance(const Architecture& arch, const VarianceVector& vars, double noise_var,
                                          const Dataset& data, const Eigen::MatrixXd& test_inputs,
                                          const GibbsConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw DomainError("noise variance must be positive");
  vars.require_strictly_positive();
  check_shapes(arch, data, test_inputs);

  RngStream rng(cfg.seed, 0xf1ed);
  const Eigen::VectorXd sd = prior_standard_deviations(arch, vars);
  Eigen::VectorXd z = standard_normal(arch.param_count(), rng);
  NutsSampler sampler(whitened_density(arch, sd, data, noise_var), cfg.hmc);
  sampler.initialize_step_size(z, rng);

  PosteriorSamples out;
  const int retained = cfg.retained_count();
  if (cfg.keep_params) out.theta.reserve(static_cast<std::size_t>(retained));
  out.evaluations.resize(retained, test_inputs.cols());
  ChainTally tally;
  int row = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const bool adapting = it < cfg.burn_in;
    for (int s = 0; s < cfg.hmc_steps_per_iteration; ++s) {
      const NutsTransition t = sampler.transition(z, rng);
      if (adapting) sampler.adapt(t.accept_stat);
      else tally.add(t);
    }
    if (it + 1 == cfg.burn_in) sampler.finish_adaptation();
    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
      const ParamVector theta(arch, sd.cwiseProduct(z));
      if (test_inputs.cols() > 0) out.evaluations.row(row) = forward(arch, theta, test_inputs).row(0);
      if (cfg.keep_params) out.theta.push_back(theta);
      out.sigma2.push_back(noise_var);
      ++row;
    }
  }
  finish_diagnostics(out.diagnostics, tally, out.sigma2, sampler.step_size(), start);
  return out;
}

}  // namespace tpbnn
