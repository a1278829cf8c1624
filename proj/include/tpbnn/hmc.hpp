#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "tpbnn/rng.hpp"

namespace tpbnn {

// Returns log density at q; fills *grad when non-null.
using LogDensityFn = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd* grad)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& q)>;
using ScalarDensityFn = std::function<double(const Eigen::VectorXd& q)>;

struct HmcConfig {
  double step_size = 0.0;  // <= 0: heuristic start, then dual averaging during warmup
  int max_tree_depth = 8;
  int warmup = 500;
  double target_accept = 0.8;
  double max_energy_error = 1000.0;
  // Diagonal inverse mass matrix; empty means identity. Not adapted.
  Eigen::VectorXd inverse_metric;

  void validate() const;
};

struct NutsTransition {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int leapfrog_steps = 0;
  bool divergent = false;
  double log_density = 0.0;
};

// Multinomial no-U-turn sampler with the generalized U-turn criterion
// (including the checks across merged subtrees) and dual-averaging step-size
// adaptation.
class NutsSampler {
 public:
  NutsSampler(LogDensityFn log_density, HmcConfig cfg);

  // Picks a starting step size by doubling/halving until the one-step
  // acceptance crosses 0.8. No-op when cfg.step_size > 0.
  void initialize_step_size(const Eigen::VectorXd& q, RngStream& rng);

  NutsTransition transition(Eigen::VectorXd& q, RngStream& rng);

  // Dual-averaging update with the acceptance statistic of the last transition.
  void adapt(double accept_stat);
  // Freeze the step size at the averaged value.
  void finish_adaptation();

  [[nodiscard]] double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  // Swap the target while keeping step size and adaptation state.
  void set_log_density(LogDensityFn log_density) { log_density_ = std::move(log_density); }
  [[nodiscard]] const HmcConfig& config() const { return cfg_; }

 private:
  struct State {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double log_density = 0.0;
  };

  void evaluate(State& s) const;
  void leapfrog(State& s, double eps) const;
  [[nodiscard]] double hamiltonian(const State& s) const;
  [[nodiscard]] Eigen::VectorXd velocity(const Eigen::VectorXd& p) const;
  bool build_tree(int depth, State& z, State& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob, bool& divergent, RngStream& rng);

  LogDensityFn log_density_;
  HmcConfig cfg_;
  double step_size_ = 1.0;
  // dual averaging
  double mu_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  long counter_ = 0;
};

struct HmcDiagnostics {
  double mean_accept = 0.0;  // post-warmup
  int divergences = 0;       // post-warmup
  double step_size = 0.0;
  std::vector<int> tree_depths;
  long leapfrog_steps = 0;
};

struct HmcChain {
  std::vector<Eigen::VectorXd> draws;
  HmcDiagnostics diagnostics;
};

HmcChain hmc_sample(const LogDensityFn& log_density, const Eigen::VectorXd& init, const HmcConfig& cfg, int n_draws,
                    RngStream& rng);
HmcChain hmc_sample(const ScalarDensityFn& log_density, const GradientFn& grad, const Eigen::VectorXd& init,
                    const HmcConfig& cfg, int n_draws, RngStream& rng);

}  // namespace tpbnn
