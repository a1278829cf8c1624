#include <CLI11.hpp>
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "tpbnn/errors.hpp"
#include "tpbnn/experiments.hpp"
#include "tpbnn/log.hpp"
#include "tpbnn/runtime.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--jobs", opts.jobs, "parallel width jobs")->check(CLI::PositiveNumber);
  cmd->add_flag("-v,--verbose", opts.verbose, "log progress to stderr");
}

tpbnn::ExperimentConfig resolve(const CommonOptions& opts) {
  tpbnn::ExperimentConfig cfg = tpbnn::load_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.jobs) cfg.jobs = *opts.jobs;
  cfg.validate();
  return cfg;
}

void print_convergence(const tpbnn::ConvergenceReport& r) {
  std::cout << r.experiment << "\n";
  for (const auto& row : r.rows)
    std::cout << "  width " << row.width << ": W1 " << row.w1 << " [" << row.w1_lo << ", " << row.w1_hi << "]\n";
  std::cout << "  log-log slope " << r.slope << ", " << r.seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  tpbnn::tune_allocator();
  CLI::App app{"Gaussian-Inverse-Gamma BNN experiments"};
  app.require_subcommand(1);
  CommonOptions opts;
  CLI::App* prior = app.add_subcommand("prior-convergence", "W1 between prior BNN draws and the NNGP, per width");
  CLI::App* posterior =
      app.add_subcommand("posterior-convergence", "W1 between Gibbs posterior draws and the Student-t limit");
  CLI::App* baseline =
      app.add_subcommand("gaussian-baseline", "fixed-variance posterior vs the GP limit, per width");
  CLI::App* compare = app.add_subcommand("compare", "Student-t and Gaussian process predictive bands");
  CLI::App* diagnostics = app.add_subcommand("diagnostics", "likelihood constants and the hyperparameter check");
  for (CLI::App* cmd : {prior, posterior, baseline, compare, diagnostics}) add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    tpbnn::set_log_level(opts.verbose ? tpbnn::LogLevel::info : tpbnn::LogLevel::warning);
    const tpbnn::ExperimentConfig cfg = resolve(opts);
    if (prior->parsed()) {
      const auto r = tpbnn::run_prior_convergence(cfg);
      tpbnn::emit_figure_data(r, cfg.output_dir, "prior_convergence");
      print_convergence(r);
    } else if (posterior->parsed()) {
      const auto r = tpbnn::run_posterior_convergence(cfg);
      tpbnn::emit_figure_data(r, cfg.output_dir, "posterior_convergence");
      print_convergence(r);
    } else if (baseline->parsed()) {
      const auto r = tpbnn::run_gaussian_baseline(cfg);
      tpbnn::emit_figure_data(r, cfg.output_dir, "gaussian_baseline");
      print_convergence(r);
    } else if (compare->parsed()) {
      const auto r = tpbnn::run_comparison(cfg);
      tpbnn::emit_figure_data(r, cfg.output_dir, "compare_bands");
      std::cout << "compare: " << r.bands.size() << " grid points, Student-t dof " << r.tp_dof << "\n";
    } else if (diagnostics->parsed()) {
      const auto r = tpbnn::run_bound_diagnostics(cfg);
      tpbnn::emit_figure_data(r, cfg.output_dir, "diagnostics");
      for (const auto& row : r.rows)
        std::cout << "sigma2 " << row.sigma2 << ", n_L k " << row.dim << ": sup " << row.sup_numeric << " (analytic "
                  << row.sup_analytic << "), Lip " << row.lip_numeric << " (analytic " << row.lip_analytic << ")\n";
      if (r.constraint)
        std::cout << "constraint: a_ok " << r.constraint->a_ok << ", b_ok " << r.constraint->b_ok << " (b > "
                  << r.constraint->b_lower_bound << ")\n";
    }
  } catch (const tpbnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tpbnn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
