#include "tpbnn/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "tpbnn/errors.hpp"

namespace tpbnn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus, const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

// dual averaging constants
constexpr double kGamma = 0.05;
constexpr double kT0 = 10.0;
constexpr double kKappa = 0.75;

[[maybe_unused]] void check_gradient(const LogDensityFn& f, const Eigen::VectorXd& q) {
  Eigen::VectorXd g;
  f(q, &g);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(q.size(), 16); ++i) {
    Eigen::VectorXd qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const double fd = (f(qp, nullptr) - f(qm, nullptr)) / (2.0 * h);
    if (std::abs(fd - g[i]) > 1e-3 * std::max(1.0, std::abs(fd)))
      throw NumericalError("gradient disagrees with finite differences at coordinate " + std::to_string(i));
  }
}

}  // namespace

void HmcConfig::validate() const {
  if (max_tree_depth < 1) throw DomainError("max tree depth must be >= 1");
  if (warmup < 0) throw DomainError("warmup must be >= 0");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw DomainError("target acceptance must lie in (0, 1)");
  if (!(max_energy_error > 0.0)) throw DomainError("max energy error must be positive");
  if (inverse_metric.size() > 0 && !(inverse_metric.array() > 0.0).all())
    throw DomainError("inverse metric must be positive");
}

NutsSampler::NutsSampler(LogDensityFn log_density, HmcConfig cfg) : log_density_(std::move(log_density)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.step_size > 0.0) step_size_ = cfg_.step_size;
  mu_ = std::log(10.0 * step_size_);
}

void NutsSampler::evaluate(State& s) const {
  s.log_density = log_density_(s.q, &s.grad);
  if (!std::isfinite(s.log_density)) s.log_density = kNegInf;
}

Eigen::VectorXd NutsSampler::velocity(const Eigen::VectorXd& p) const {
  if (cfg_.inverse_metric.size() == 0) return p;
  return cfg_.inverse_metric.cwiseProduct(p);
}

void NutsSampler::leapfrog(State& s, double eps) const {
  s.p += 0.5 * eps * s.grad;
  s.q += eps * velocity(s.p);
  evaluate(s);
  if (s.log_density == kNegInf || !s.grad.allFinite()) return;
  s.p += 0.5 * eps * s.grad;
}

double NutsSampler::hamiltonian(const State& s) const {
  if (s.log_density == kNegInf || !s.p.allFinite()) return std::numeric_limits<double>::infinity();
  return -s.log_density + 0.5 * s.p.dot(velocity(s.p));
}

void NutsSampler::initialize_step_size(const Eigen::VectorXd& q, RngStream& rng) {
  if (cfg_.step_size > 0.0) return;
  if (q.size() == 0) return;
  State z;
  z.q = q;
  evaluate(z);
  if (z.log_density == kNegInf) throw NumericalError("initial point has zero density");
  auto sample_momentum = [&](State& s) {
    s.p.resize(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      const double sd = cfg_.inverse_metric.size() ? 1.0 / std::sqrt(cfg_.inverse_metric[i]) : 1.0;
      s.p[i] = sd * rng.normal();
    }
  };
  double eps = 1.0;
  sample_momentum(z);
  State trial = z;
  leapfrog(trial, eps);
  double delta = hamiltonian(z) - hamiltonian(trial);
  const int direction = (std::isfinite(delta) && delta > std::log(0.8)) ? 1 : -1;
  for (int iter = 0; iter < 100; ++iter) {
    sample_momentum(z);
    trial = z;
    leapfrog(trial, eps);
    delta = hamiltonian(z) - hamiltonian(trial);
    if (!std::isfinite(delta)) delta = kNegInf;
    if (direction == 1 && !(delta > std::log(0.8))) break;
    if (direction == -1 && !(delta < std::log(0.8))) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7 || eps < 1e-10) break;
  }
  step_size_ = eps;
  mu_ = std::log(10.0 * step_size_);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0;
}

void NutsSampler::adapt(double accept_stat) {
  ++counter_;
  const double c = static_cast<double>(counter_);
  const double eta = 1.0 / (c + kT0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (cfg_.target_accept - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
  const double x_eta = std::pow(c, -kKappa);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  step_size_ = std::exp(x);
}

void NutsSampler::finish_adaptation() {
  if (counter_ > 0) step_size_ = std::exp(x_bar_);
}

bool NutsSampler::build_tree(int depth, State& z, State& z_propose, Eigen::VectorXd& p_sharp_beg,
                             Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                             Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                             double& log_sum_weight, double& sum_metro_prob, bool& divergent, RngStream& rng) {
  if (depth == 0) {
    leapfrog(z, sign * step_size_);
    ++n_leapfrog;
    double h = hamiltonian(z);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    if (h - h0 > cfg_.max_energy_error) divergent = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    sum_metro_prob += (h0 - h > 0.0) ? 1.0 : std::exp(h0 - h);
    z_propose = z;
    p_sharp_beg = velocity(z.p);
    p_sharp_end = p_sharp_beg;
    rho += z.p;
    p_beg = z.p;
    p_end = p_beg;
    return !divergent;
  }
  const Eigen::Index dim = z.q.size();

  double log_sum_weight_init = kNegInf;
  Eigen::VectorXd p_init_end(dim), p_sharp_init_end(dim), rho_init = Eigen::VectorXd::Zero(dim);
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                  n_leapfrog, log_sum_weight_init, sum_metro_prob, divergent, rng))
    return false;

  State z_propose_final = z;
  double log_sum_weight_final = kNegInf;
  Eigen::VectorXd p_final_beg(dim), p_sharp_final_beg(dim), rho_final = Eigen::VectorXd::Zero(dim);
  if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                  sign, n_leapfrog, log_sum_weight_final, sum_metro_prob, divergent, rng))
    return false;

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = z_propose_final;
  } else if (rng.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = z_propose_final;
  }

  const Eigen::VectorXd rho_subtree = rho_init + rho_final;
  rho += rho_subtree;
  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
  return persist;
}

NutsTransition NutsSampler::transition(Eigen::VectorXd& q, RngStream& rng) {
  NutsTransition out;
  const Eigen::Index dim = q.size();
  State z;
  z.q = q;
  evaluate(z);
  if (z.log_density == kNegInf) throw NumericalError("current point has zero density");
  if (dim == 0) {
    out.accept_stat = 1.0;
    out.log_density = z.log_density;
    return out;
  }
  z.p.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double sd = cfg_.inverse_metric.size() ? 1.0 / std::sqrt(cfg_.inverse_metric[i]) : 1.0;
    z.p[i] = sd * rng.normal();
  }
  const double h0 = hamiltonian(z);

  State z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
  Eigen::VectorXd p_fwd_fwd = z.p, p_fwd_bck = z.p, p_bck_fwd = z.p, p_bck_bck = z.p;
  Eigen::VectorXd p_sharp_fwd_fwd = velocity(z.p), p_sharp_fwd_bck = p_sharp_fwd_fwd;
  Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd, p_sharp_bck_bck = p_sharp_fwd_fwd;
  Eigen::VectorXd rho = z.p;
  double log_sum_weight = 0.0;
  double sum_metro_prob = 0.0;
  int n_leapfrog = 0;
  int depth = 0;
  bool divergent = false;

  while (depth < cfg_.max_tree_depth) {
    Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim), rho_bck = Eigen::VectorXd::Zero(dim);
    bool valid_subtree;
    double log_sum_weight_subtree = kNegInf;
    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid_subtree = build_tree(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                                 p_fwd_fwd, h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent,
                                 rng);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid_subtree = build_tree(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                                 p_bck_bck, h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent,
                                 rng);
    }
    if (!valid_subtree) break;
    ++depth;
    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  q = z_sample.q;
  out.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  out.tree_depth = depth;
  out.leapfrog_steps = n_leapfrog;
  out.divergent = divergent;
  out.log_density = z_sample.log_density;
  return out;
}

HmcChain hmc_sample(const LogDensityFn& log_density, const Eigen::VectorXd& init, const HmcConfig& cfg, int n_draws,
                    RngStream& rng) {
  if (n_draws < 0) throw DomainError("n_draws must be >= 0");
  HmcChain chain;
  if (n_draws == 0) return chain;
#ifndef NDEBUG
  check_gradient(log_density, init);
#endif
  NutsSampler sampler(log_density, cfg);
  Eigen::VectorXd q = init;
  sampler.initialize_step_size(q, rng);
  for (int i = 0; i < cfg.warmup; ++i) {
    const NutsTransition t = sampler.transition(q, rng);
    sampler.adapt(t.accept_stat);
  }
  if (cfg.warmup > 0) sampler.finish_adaptation();
  chain.draws.reserve(static_cast<std::size_t>(n_draws));
  chain.diagnostics.tree_depths.reserve(static_cast<std::size_t>(n_draws));
  double accept = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    const NutsTransition t = sampler.transition(q, rng);
    chain.draws.push_back(q);
    chain.diagnostics.tree_depths.push_back(t.tree_depth);
    chain.diagnostics.leapfrog_steps += t.leapfrog_steps;
    chain.diagnostics.divergences += t.divergent ? 1 : 0;
    accept += t.accept_stat;
  }
  chain.diagnostics.mean_accept = accept / n_draws;
  chain.diagnostics.step_size = sampler.step_size();
  return chain;
}

HmcChain hmc_sample(const ScalarDensityFn& log_density, const GradientFn& grad, const Eigen::VectorXd& init,
                    const HmcConfig& cfg, int n_draws, RngStream& rng) {
  LogDensityFn combined = [&](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    const double v = log_density(q);
    if (g) *g = grad(q);
    return v;
  };
  return hmc_sample(combined, init, cfg, n_draws, rng);
}

}  // namespace tpbnn
