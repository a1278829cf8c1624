#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "tpbnn/errors.hpp"
#include "tpbnn/experiments.hpp"
#include "tpbnn/log.hpp"

using namespace tpbnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tpbnn_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ExperimentConfig small_prior_config() {
  ExperimentConfig cfg;
  cfg.widths = {1, 2, 4, 8};
  cfg.data.points = 0;
  cfg.data.grid_points = 3;
  cfg.data.w1_points = 3;
  cfg.sampling.draws = 40;
  cfg.sampling.repetitions = 3;
  cfg.sliced_projections = 10;
  cfg.seed = 11;
  return cfg;
}

ExperimentConfig small_posterior_config() {
  ExperimentConfig cfg;
  cfg.widths = {1, 4};
  cfg.data.points = 4;
  cfg.data.grid_points = 6;
  cfg.data.w1_points = 2;
  cfg.sampling.draws = 20;
  cfg.sampling.repetitions = 2;
  cfg.sampling.burn_in = 50;
  cfg.sliced_projections = 5;
  cfg.seed = 5;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TPBNN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct QuietLogs {
  QuietLogs() { set_log_level(LogLevel::quiet); }
  ~QuietLogs() { set_log_level(LogLevel::warning); }
};

}  // namespace

TEST_CASE("config parsing: defaults, unknown keys, malformed input") {
  const ExperimentConfig d = parse_config("{}");
  CHECK(d.widths == std::vector<int>{1, 2, 4, 8, 16, 32, 64, 128});
  CHECK(d.variance_model == VarianceModel::inverse_gamma);
  CHECK(d.sampling.draws == 100);
  CHECK(d.data.grid_points == 64);
  CHECK_FALSE(d.kernel_method.has_value());

  CHECK_THROWS_AS(parse_config("{\"bogus\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"sampling\": {\"draw\": 10}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[]"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"seed\": \"x\"}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"architecture\": {\"widths\": [4, 2]}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"architecture\": {\"activation\": \"gelu\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"variance_model\": {\"type\": \"gamma\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"variance_model\": {\"a\": 0}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"dataset\": {\"function\": \"cos\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"dataset\": {\"domain\": [1]}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"dataset\": {\"grid_points\": 3, \"w1_points\": 4}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"sampling\": {\"draws\": 1}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"sampling\": {\"target_accept\": 1.0}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"diagnostics\": {\"settings\": [[1.0, 1.5]]}}"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  const ExperimentConfig f = parse_config(
      R"({"variance_model": {"type": "fixed", "noise_variance": 0.2}, "variances": {"weight": 2, "bias": 0},
          "kernel": {"method": "gauss_hermite"}, "sampling": {"parameterization": "centered"}})");
  CHECK(f.variance_model == VarianceModel::fixed);
  CHECK(f.noise_variance == 0.2);
  CHECK(f.bias_variance == 0.0);
  CHECK(f.kernel_method == ExpectationMethod::gauss_hermite);
  CHECK(f.sampling.parameterization == Sigma2Parameterization::centered);
}

TEST_CASE("config JSON round trip and hash sensitivity") {
  ExperimentConfig cfg = small_posterior_config();
  cfg.first_layer_bias_variance = 0.25;
  cfg.kernel_method = ExpectationMethod::monte_carlo;
  const ExperimentConfig back = parse_config(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));

  const std::uint64_t h = config_hash(cfg);
  std::vector<std::function<void(ExperimentConfig&)>> mutations{
      [](ExperimentConfig& c) { c.name = "other"; },
      [](ExperimentConfig& c) { c.seed += 1; },
      [](ExperimentConfig& c) { c.output_dir = "elsewhere"; },
      [](ExperimentConfig& c) { c.jobs = 2; },
      [](ExperimentConfig& c) { c.input_dim = 2; },
      [](ExperimentConfig& c) { c.hidden_layers = 3; },
      [](ExperimentConfig& c) { c.activation = Activation::tanh; },
      [](ExperimentConfig& c) { c.widths.push_back(64); },
      [](ExperimentConfig& c) { c.weight_variance = 1.5; },
      [](ExperimentConfig& c) { c.bias_variance = 1.5; },
      [](ExperimentConfig& c) { c.first_layer_bias_variance.reset(); },
      [](ExperimentConfig& c) { c.variance_model = VarianceModel::fixed; },
      [](ExperimentConfig& c) { c.a = 4.0; },
      [](ExperimentConfig& c) { c.b = 4.0; },
      [](ExperimentConfig& c) { c.noise_variance = 0.3; },
      [](ExperimentConfig& c) { c.data.function = "zero"; },
      [](ExperimentConfig& c) { c.data.points = 5; },
      [](ExperimentConfig& c) { c.data.noise_sd = 0.2; },
      [](ExperimentConfig& c) { c.data.lo = -2.0; },
      [](ExperimentConfig& c) { c.data.hi = 2.0; },
      [](ExperimentConfig& c) { c.data.grid_points = 7; },
      [](ExperimentConfig& c) { c.data.grid_lo = -2.0; },
      [](ExperimentConfig& c) { c.data.grid_hi = 2.0; },
      [](ExperimentConfig& c) { c.data.w1_points = 3; },
      [](ExperimentConfig& c) { c.sampling.draws = 21; },
      [](ExperimentConfig& c) { c.sampling.repetitions = 3; },
      [](ExperimentConfig& c) { c.sampling.burn_in = 51; },
      [](ExperimentConfig& c) { c.sampling.thin = 2; },
      [](ExperimentConfig& c) { c.sampling.hmc_steps = 4; },
      [](ExperimentConfig& c) { c.sampling.max_tree_depth = 7; },
      [](ExperimentConfig& c) { c.sampling.target_accept = 0.9; },
      [](ExperimentConfig& c) { c.sampling.parameterization = Sigma2Parameterization::centered; },
      [](ExperimentConfig& c) { c.sampling.likelihood_scale = 2.0; },
      [](ExperimentConfig& c) { c.kernel_method.reset(); },
      [](ExperimentConfig& c) { c.sliced_projections = 6; },
      [](ExperimentConfig& c) { c.likelihood_settings.pop_back(); },
      [](ExperimentConfig& c) { c.restarts = 3; },
  };
  for (std::size_t i = 0; i < mutations.size(); ++i) {
    CAPTURE(i);
    ExperimentConfig m = cfg;
    mutations[i](m);
    CHECK(config_hash(m) != h);
  }
}

TEST_CASE("datasets and grids") {
  ExperimentConfig cfg = small_posterior_config();
  cfg.data.points = 8;
  const Dataset a = make_dataset(cfg), b = make_dataset(cfg);
  CHECK(a.x() == b.x());
  CHECK(a.y() == b.y());
  CHECK(a.size() == 8);
  for (Eigen::Index i = 0; i < a.x().cols(); ++i) {
    CHECK(a.x()(0, i) >= -1.0);
    CHECK(a.x()(0, i) <= 1.0);
    if (i > 0) CHECK(a.x()(0, i) >= a.x()(0, i - 1));
  }
  cfg.data.noise_sd = 0.0;
  const Dataset clean = make_dataset(cfg);
  for (Eigen::Index i = 0; i < clean.x().cols(); ++i)
    CHECK(clean.y()(0, i) == doctest::Approx(std::sin(2.0 * M_PI * clean.x()(0, i))));
  cfg.seed += 1;
  CHECK(make_dataset(cfg).x() != a.x());

  cfg.data.grid_points = 5;
  const Eigen::MatrixXd g = make_grid(cfg);
  CHECK(g.cols() == 5);
  CHECK(g(0, 0) == -1.0);
  CHECK(g(0, 2) == 0.0);
  CHECK(g(0, 4) == 1.0);
  cfg.data.grid_points = 1;
  CHECK(make_grid(cfg)(0, 0) == 0.0);

  CHECK(w1_subgrid(64, 5) == std::vector<int>{0, 16, 32, 47, 63});
  CHECK(w1_subgrid(5, 5) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(w1_subgrid(9, 1) == std::vector<int>{4});
  CHECK(w1_subgrid(0, 5).empty());
}

TEST_CASE("log-log slope") {
  std::vector<double> x{1, 2, 4, 8, 16}, y;
  for (double v : x) y.push_back(3.0 / std::sqrt(v));
  CHECK(loglog_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(std::isnan(loglog_slope({1, 2, 4}, {1, 0.7, 0.5})));
  CHECK(std::isnan(loglog_slope({1, 2, 4, 8}, {1, 0.0, 0.5, 0.2})));
  CHECK_THROWS_AS(loglog_slope({1, 2}, {1}), DimensionError);
}

TEST_CASE("figure data: header-only CSV and round trip") {
  const fs::path dir = scratch_dir("emit");
  ConvergenceReport empty;
  empty.experiment = "prior-convergence";
  emit_figure_data(empty, dir.string(), "empty");
  CHECK(slurp(dir / "empty.csv") == "width,w1,w1_lo,w1_hi,seed\n");
  CHECK(read_convergence_csv((dir / "empty.csv").string()).empty());
  CHECK(fs::exists(dir / "empty.json"));

  ConvergenceReport r;
  r.experiment = "prior-convergence";
  r.rows.resize(3);
  for (int i = 0; i < 3; ++i) {
    r.rows[i].width = 1 << i;
    r.rows[i].w1 = 0.1 / (i + 1) + 1e-17 * i;
    r.rows[i].w1_lo = r.rows[i].w1 * 0.9;
    r.rows[i].w1_hi = r.rows[i].w1 * 1.1 + M_PI;
    r.rows[i].seed = 0xffffffffffffff00ULL + i;
  }
  emit_figure_data(r, dir.string(), "rows");
  const auto back = read_convergence_csv((dir / "rows.csv").string());
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].width == r.rows[i].width);
    CHECK(back[i].w1 == r.rows[i].w1);
    CHECK(back[i].w1_lo == r.rows[i].w1_lo);
    CHECK(back[i].w1_hi == r.rows[i].w1_hi);
    CHECK(back[i].seed == r.rows[i].seed);
  }
  write_file(dir / "bad.csv", "width,w1\n1,2\n");
  CHECK_THROWS(read_convergence_csv((dir / "bad.csv").string()));
  CHECK_THROWS(read_convergence_csv((dir / "missing.csv").string()));
  fs::remove_all(dir);
}

TEST_CASE("prior convergence: determinism and jobs independence") {
  QuietLogs quiet;
  ExperimentConfig cfg = small_prior_config();
  const fs::path dir = scratch_dir("prior");
  const ConvergenceReport r1 = run_prior_convergence(cfg);
  emit_figure_data(r1, dir.string(), "a");
  emit_figure_data(run_prior_convergence(cfg), dir.string(), "b");
  cfg.jobs = 3;
  emit_figure_data(run_prior_convergence(cfg), dir.string(), "c");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv") == slurp(dir / "c.csv"));

  REQUIRE(r1.rows.size() == 4);
  for (const auto& row : r1.rows) {
    CHECK(row.repetitions.size() == 3);
    CHECK(row.w1_lo <= row.w1);
    CHECK(row.w1 <= row.w1_hi);
    CHECK(row.w1 > 0.0);
    CHECK(row.sliced_w1 > 0.0);
  }
  CHECK(std::isfinite(r1.slope));
  CHECK(r1.limit_location.size() == 3);
  CHECK(r1.limit_scale_diag.minCoeff() > 0.0);
  CHECK_FALSE(r1.constraint.has_value());

  cfg.seed += 1;
  emit_figure_data(run_prior_convergence(cfg), dir.string(), "d");
  CHECK(slurp(dir / "a.csv") != slurp(dir / "d.csv"));
  fs::remove_all(dir);
}

TEST_CASE("prior convergence: zero-bias network at the origin is exactly zero") {
  QuietLogs quiet;
  ExperimentConfig cfg = small_prior_config();
  cfg.bias_variance = 0.0;
  cfg.data.grid_points = 1;
  cfg.data.grid_lo = cfg.data.grid_hi = 0.0;
  cfg.data.w1_points = 1;
  const ConvergenceReport r = run_prior_convergence(cfg);
  for (const auto& row : r.rows) CHECK(row.w1 == 0.0);
  CHECK(r.limit_scale_diag[0] == 0.0);
  CHECK(std::isnan(r.slope));
}

TEST_CASE("empty test grid gives zero distances and empty bands") {
  QuietLogs quiet;
  ExperimentConfig cfg = small_posterior_config();
  cfg.data.grid_points = 0;
  const ConvergenceReport p = run_prior_convergence(cfg);
  REQUIRE(p.rows.size() == 2);
  CHECK(p.rows[1].width == 4);
  CHECK(p.rows[1].w1 == 0.0);
  CHECK(p.rows[1].repetitions.size() == 2);
  const ConvergenceReport q = run_posterior_convergence(cfg);
  CHECK(q.rows[0].w1 == 0.0);
  CHECK(q.limit_location.size() == 0);
  CHECK(run_comparison(cfg).bands.empty());
}

TEST_CASE("posterior convergence with no data targets the prior Student-t") {
  QuietLogs quiet;
  ExperimentConfig cfg = small_posterior_config();
  cfg.data.points = 0;
  const ConvergenceReport r = run_posterior_convergence(cfg);
  CHECK(r.limit_dof == 2.0 * cfg.a);
  CHECK(r.limit_location.norm() == 0.0);
  CHECK_FALSE(r.constraint.has_value());
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) {
    CHECK(std::isfinite(row.w1));
    CHECK(row.repetitions.size() == 2);
    CHECK(row.sigma2_mean > 0.0);
    CHECK(row.mean_accept > 0.0);
  }
}

TEST_CASE("posterior convergence and gaussian baseline small runs") {
  QuietLogs quiet;
  const ExperimentConfig cfg = small_posterior_config();
  const ConvergenceReport t = run_posterior_convergence(cfg);
  CHECK(t.limit_dof == 2.0 * cfg.a + cfg.data.points);
  CHECK(t.constraint.has_value());
  CHECK(t.limit_location.size() == 2);
  CHECK(t.experiment == "posterior-convergence");
  ExperimentConfig g = cfg;
  g.variance_model = VarianceModel::fixed;
  const ConvergenceReport gb = run_gaussian_baseline(g);
  CHECK(gb.limit_dof == 0.0);
  CHECK(gb.experiment == "gaussian-baseline");
  for (const auto& row : gb.rows) {
    CHECK(row.sigma2_mean == doctest::Approx(g.noise_variance).epsilon(1e-12));
    CHECK(std::isfinite(row.w1));
  }
  CHECK(run_gaussian_baseline(g).rows[1].w1 == gb.rows[1].w1);
}

TEST_CASE("comparison: the Student-t bands follow the data noise, conjugate limit") {
  QuietLogs quiet;
  ExperimentConfig cfg;
  cfg.data.points = 8;
  cfg.data.grid_points = 41;
  cfg.data.function = "zero";
  auto mean_widths = [](const ComparisonReport& r) {
    double tp = 0.0, gp = 0.0;
    for (const auto& row : r.bands) {
      CHECK(row.tp_lo < row.tp_mid);
      CHECK(row.tp_mid < row.tp_hi);
      tp += (row.tp_hi - row.tp_lo) / static_cast<double>(r.bands.size());
      gp += (row.gp_hi - row.gp_lo) / static_cast<double>(r.bands.size());
    }
    return std::pair{tp, gp};
  };
  cfg.data.noise_sd = 2.0;
  const ComparisonReport noisy = run_comparison(cfg);
  REQUIRE(noisy.bands.size() == 41);
  CHECK(noisy.tp_dof == 2.0 * cfg.a + 8);
  cfg.data.noise_sd = 0.01;
  const ComparisonReport clean = run_comparison(cfg);
  const auto [tp_noisy, gp_noisy] = mean_widths(noisy);
  const auto [tp_clean, gp_clean] = mean_widths(clean);
  CHECK(tp_noisy > 1.5 * tp_clean);
  CHECK(gp_noisy == doctest::Approx(gp_clean).epsilon(1e-12));
  CHECK(tp_noisy > gp_noisy);

  // sigma2 concentrates at b / a = 0.1: the Student-t process becomes the GP
  // with kernel 0.1 K' and noise 0.1, which is kernel_recursion at variances 0.1.
  cfg.a = 1e5;
  cfg.b = 1e4;
  cfg.weight_variance = cfg.bias_variance = 0.1;
  const ComparisonReport c = run_comparison(cfg);
  double gap = 0.0;
  for (const auto& row : c.bands) {
    const double width = row.gp_hi - row.gp_lo;
    gap = std::max({gap, std::abs(row.tp_lo - row.gp_lo) / width, std::abs(row.tp_hi - row.gp_hi) / width,
                    std::abs(row.tp_mid - row.gp_mid) / width});
  }
  CHECK(gap < 0.05);
}

TEST_CASE("likelihood constants") {
  RngStream rng(17);
  const LikelihoodBoundRow one = likelihood_bounds(1.0, 1, 10, rng);
  CHECK(one.sup_analytic == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  CHECK(one.lip_analytic == doctest::Approx(0.24197072451914337).epsilon(1e-14));
  CHECK(std::abs(one.sup_numeric - one.sup_analytic) < 1e-6);
  CHECK(std::abs(one.lip_numeric - one.lip_analytic) < 1e-6);
  for (auto [s, n] : {std::pair{4.0, 2}, {0.5, 3}}) {
    const LikelihoodBoundRow row = likelihood_bounds(s, n, 20, rng);
    CHECK(std::abs(row.sup_numeric - row.sup_analytic) < 1e-5);
    CHECK(std::abs(row.lip_numeric - row.lip_analytic) < 1e-5);
    CHECK(std::abs(row.argmax_residual_sq - s) < 1e-4);
  }
  CHECK_THROWS_AS(likelihood_bounds(0.0, 1, 1, rng), DomainError);
  CHECK_THROWS_AS(likelihood_bounds(1.0, 0, 1, rng), DomainError);

  QuietLogs quiet;
  ExperimentConfig cfg;
  const DiagnosticsReport d = run_bound_diagnostics(cfg);
  CHECK(d.rows.size() == 3);
  CHECK(d.constraint.has_value());
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch_dir("cli");
  const std::string out = " --out " + (dir / "out").string();
  CHECK(run_cli("diagnostics --config " + (dir / "missing.json").string() + out) == 2);
  write_file(dir / "bad.json", "{\"sampling\": {\"draws\": 1}}");
  CHECK(run_cli("prior-convergence --config " + (dir / "bad.json").string() + out) == 2);
  write_file(dir / "junk.json", "{junk");
  CHECK(run_cli("compare --config " + (dir / "junk.json").string() + out) == 2);
  CHECK(run_cli("prior-convergence" + out) == 2);
  CHECK(run_cli("no-such-command") == 2);

  write_file(dir / "ok.json", config_to_json(small_prior_config()));
  const std::string ok = " --config " + (dir / "ok.json").string() + out;
  CHECK(run_cli("diagnostics" + ok) == 0);
  CHECK(fs::exists(dir / "out" / "diagnostics.csv"));
  CHECK(run_cli("prior-convergence" + ok + " --seed 3 --jobs 2") == 0);
  CHECK(fs::exists(dir / "out" / "prior_convergence.csv"));
  CHECK(fs::exists(dir / "out" / "prior_convergence.json"));
  CHECK(run_cli("compare" + ok) == 0);
  CHECK(run_cli("prior-convergence" + ok + " --jobs 0") == 2);

  ExperimentConfig huge = small_prior_config();
  huge.widths = {1};
  huge.data.grid_points = 1;
  huge.data.w1_points = 1;
  huge.sampling.draws = 3000;
  huge.sampling.repetitions = 1;
  write_file(dir / "huge.json", config_to_json(huge));
  CHECK(run_cli("prior-convergence --config " + (dir / "huge.json").string() + out) == 3);
  fs::remove_all(dir);
}
