#include "tpbnn/experiments.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/version.hpp>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "tpbnn/errors.hpp"
#include "tpbnn/limit_posteriors.hpp"
#include "tpbnn/log.hpp"
#include "tpbnn/samplers.hpp"
#include "tpbnn/wasserstein.hpp"

namespace tpbnn {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

// --- config parsing helpers ------------------------------------------------

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_range(const json& obj, const char* key, double& lo, double& hi, const std::string& where) {
  if (!obj.contains(key)) return;
  std::vector<double> r;
  read(obj, key, r, where);
  if (r.size() != 2) throw ConfigError(where + "." + key + " must be [lo, hi]");
  lo = r[0];
  hi = r[1];
}

std::string method_name(ExpectationMethod m) {
  switch (m) {
    case ExpectationMethod::analytic_erf: return "analytic_erf";
    case ExpectationMethod::gauss_hermite: return "gauss_hermite";
    case ExpectationMethod::monte_carlo: return "monte_carlo";
  }
  return "?";
}

std::uint64_t width_seed(std::uint64_t seed, int width) {
  return mix64(seed ^ mix64(0x77696474ULL + static_cast<std::uint64_t>(width)));
}

double reference_function(const std::string& name, double x) {
  if (name == "sin2pi") return std::sin(2.0 * std::numbers::pi * x);
  if (name == "zero") return 0.0;
  if (name == "linear") return x;
  throw ConfigError("unknown reference function '" + name + "'");
}

// Run body(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(int n, int jobs, F body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&]() {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
  return out;
}

Eigen::VectorXd entries(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[idx[j]];
  return out;
}

Eigen::MatrixXd interleaved_rows(const Eigen::MatrixXd& m, int offset, int stride) {
  const int n = (static_cast<int>(m.rows()) - offset + stride - 1) / stride;
  Eigen::MatrixXd out(n, m.cols());
  for (int i = 0; i < n; ++i) out.row(i) = m.row(offset + i * stride);
  return out;
}

KernelOptions kernel_options(const ExperimentConfig& cfg, const Architecture& arch) {
  KernelOptions opts = default_kernel_options(arch);
  if (cfg.kernel_method) opts.method = *cfg.kernel_method;
  opts.mc_seed = mix64(cfg.seed ^ 0x6b65726eULL);
  return opts;
}

Eigen::MatrixXd join_inputs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void log_constraint(const std::optional<ConstraintReport>& r, const std::string& experiment) {
  std::ostringstream msg;
  if (!r) {
    msg << experiment << ": hyperparameter constraint not evaluated (empty dataset)";
  } else {
    msg << experiment << ": constraint a=" << r->a << " (a_ok=" << r->a_ok << "), b=" << r->b
        << " vs bound " << r->b_lower_bound << " (b_ok=" << r->b_ok << "), eps=" << r->epsilon
        << ", ||K'||_op=" << r->op_norm << ", ||y||^2=" << r->y_norm_sq;
  }
  log_info(msg.str());
  if (r && !r->satisfied()) log_warning(experiment + ": hyperparameter constraint is not satisfied");
}

std::optional<ConstraintReport> constraint_for(const ExperimentConfig& cfg, const Dataset& data) {
  if (data.size() == 0) return std::nullopt;
  const Architecture arch = cfg.architecture(cfg.widths.empty() ? 1 : cfg.widths.front());
  const KernelMatrix kp = rescaled_kernel(arch, cfg.variances(), data.x(), kernel_options(cfg, arch));
  return check_hyperparams(cfg.a, cfg.b, data.y(), kp);
}

struct RepetitionDraws {
  Eigen::MatrixXd model;  // draws x grid
  Eigen::MatrixXd limit;
};

void score_width(WidthResult& row, const std::vector<RepetitionDraws>& reps, const std::vector<int>& sub,
                 int projections, std::uint64_t seed) {
  row.repetitions.clear();
  double sliced = 0.0;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const SampleSet xs(columns(reps[r].model, sub)), ys(columns(reps[r].limit, sub));
    row.repetitions.push_back(w1_exact(xs, ys));
    if (reps[r].model.cols() > 0 && projections > 0) {
      RngStream prng(seed, 0x51ced + r);
      sliced += sliced_w1(SampleSet(reps[r].model), SampleSet(reps[r].limit), projections, prng);
    }
  }
  double s = 0.0;
  for (double v : row.repetitions) s += v;
  row.w1 = s / static_cast<double>(row.repetitions.size());
  row.w1_lo = *std::min_element(row.repetitions.begin(), row.repetitions.end());
  row.w1_hi = *std::max_element(row.repetitions.begin(), row.repetitions.end());
  row.sliced_w1 = sliced / static_cast<double>(reps.size());
}

// Zero-dimensional marginals: every distance is exactly zero.
void fill_empty_grid_rows(ConvergenceReport& report, const ExperimentConfig& cfg) {
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    WidthResult& row = report.rows[i];
    row.width = cfg.widths[i];
    row.seed = width_seed(cfg.seed, row.width);
    row.repetitions.assign(static_cast<std::size_t>(cfg.sampling.repetitions), 0.0);
  }
}

void finish_report(ConvergenceReport& report, const ExperimentConfig& cfg,
                   std::chrono::steady_clock::time_point start) {
  std::vector<double> x, y;
  for (const auto& r : report.rows) {
    x.push_back(r.width);
    y.push_back(r.w1);
  }
  report.slope = loglog_slope(x, y);
  report.config_hash = config_hash(cfg);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

GibbsConfig gibbs_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  GibbsConfig g;
  const SamplingSpec& s = cfg.sampling;
  g.burn_in = s.burn_in;
  g.thin = s.thin;
  g.iterations = s.burn_in + s.draws * s.repetitions * s.thin;
  g.hmc_steps_per_iteration = s.hmc_steps;
  g.hmc.max_tree_depth = s.max_tree_depth;
  g.hmc.target_accept = s.target_accept;
  g.parameterization = s.parameterization;
  g.likelihood_scale = s.likelihood_scale;
  g.seed = seed;
  g.keep_params = false;
  return g;
}

// --- output helpers ---------------------------------------------------------

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json constraint_json(const std::optional<ConstraintReport>& r) {
  if (!r) return nullptr;
  return json{{"a", r->a},
              {"b", r->b},
              {"epsilon", r->epsilon},
              {"op_norm", r->op_norm},
              {"y_norm_sq", r->y_norm_sq},
              {"b_lower_bound", r->b_lower_bound},
              {"a_ok", r->a_ok},
              {"b_ok", r->b_ok}};
}

json versions_json() {
  return json{{"tpbnn", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                            "." + std::to_string(BOOST_VERSION % 100)}};
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// --- ExperimentConfig -------------------------------------------------------

void ExperimentConfig::validate() const {
  if (input_dim < 1) throw ConfigError("architecture.input_dim must be >= 1");
  if (hidden_layers < 1) throw ConfigError("architecture.hidden_layers must be >= 1");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ConfigError("widths must be >= 1");
    if (i > 0 && widths[i] <= widths[i - 1]) throw ConfigError("widths must be strictly increasing");
  }
  if (!(weight_variance > 0.0)) throw ConfigError("variances.weight must be positive");
  if (!(bias_variance >= 0.0)) throw ConfigError("variances.bias must be non-negative");
  if (first_layer_bias_variance && !(*first_layer_bias_variance >= 0.0))
    throw ConfigError("variances.first_layer_bias must be non-negative");
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("variance_model.a and .b must be positive");
  if (!(noise_variance > 0.0)) throw ConfigError("variance_model.noise_variance must be positive");
  if (data.points < 0) throw ConfigError("dataset.points must be >= 0");
  if (!(data.noise_sd >= 0.0)) throw ConfigError("dataset.noise_sd must be non-negative");
  if (data.grid_points < 0) throw ConfigError("dataset.grid_points must be >= 0");
  if (data.w1_points < 1 || (data.grid_points > 0 && data.w1_points > data.grid_points))
    throw ConfigError("dataset.w1_points must lie in [1, grid_points]");
  if (!(data.hi >= data.lo) || !(data.grid_hi >= data.grid_lo)) throw ConfigError("domains must satisfy lo <= hi");
  if (sampling.draws < 2) throw ConfigError("sampling.draws must be >= 2");
  if (sampling.repetitions < 1) throw ConfigError("sampling.repetitions must be >= 1");
  if (sampling.burn_in < 0 || sampling.thin < 1 || sampling.hmc_steps < 1 || sampling.max_tree_depth < 1)
    throw ConfigError("sampling settings out of range");
  if (!(sampling.target_accept > 0.0 && sampling.target_accept < 1.0))
    throw ConfigError("sampling.target_accept must lie in (0, 1)");
  if (!(sampling.likelihood_scale > 0.0)) throw ConfigError("sampling.likelihood_scale must be positive");
  if (sliced_projections < 0) throw ConfigError("w1.sliced_projections must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (restarts < 1) throw ConfigError("diagnostics.restarts must be >= 1");
  for (const auto& [s, n] : likelihood_settings)
    if (!(s > 0.0) || n < 1) throw ConfigError("diagnostics.settings entries must be [sigma2 > 0, dim >= 1]");
}

Architecture ExperimentConfig::architecture(int width) const {
  return Architecture::uniform(input_dim, width, hidden_layers, 1, activation);
}

VarianceVector ExperimentConfig::variances() const {
  const int depth = hidden_layers + 1;
  std::vector<double> w(depth, weight_variance), bias(depth, bias_variance);
  if (first_layer_bias_variance) bias.front() = *first_layer_bias_variance;
  return VarianceVector(std::move(w), std::move(bias));
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  reject_unknown(root,
                 {"name", "seed", "output_dir", "jobs", "architecture", "variances", "variance_model", "dataset",
                  "sampling", "kernel", "w1", "diagnostics"},
                 "config");
  read(root, "name", cfg.name, "config");
  read(root, "seed", cfg.seed, "config");
  read(root, "output_dir", cfg.output_dir, "config");
  read(root, "jobs", cfg.jobs, "config");

  if (root.contains("architecture")) {
    const json& a = root["architecture"];
    reject_unknown(a, {"input_dim", "hidden_layers", "activation", "widths"}, "architecture");
    read(a, "input_dim", cfg.input_dim, "architecture");
    read(a, "hidden_layers", cfg.hidden_layers, "architecture");
    read(a, "widths", cfg.widths, "architecture");
    if (a.contains("activation")) {
      std::string name;
      read(a, "activation", name, "architecture");
      try {
        cfg.activation = parse_activation(name);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("architecture.activation: ") + e.what());
      }
    }
  }
  if (root.contains("variances")) {
    const json& v = root["variances"];
    reject_unknown(v, {"weight", "bias", "first_layer_bias"}, "variances");
    read(v, "weight", cfg.weight_variance, "variances");
    read(v, "bias", cfg.bias_variance, "variances");
    if (v.contains("first_layer_bias")) {
      double fb = 0.0;
      read(v, "first_layer_bias", fb, "variances");
      cfg.first_layer_bias_variance = fb;
    }
  }
  if (root.contains("variance_model")) {
    const json& v = root["variance_model"];
    reject_unknown(v, {"type", "a", "b", "noise_variance"}, "variance_model");
    std::string type = "inverse_gamma";
    read(v, "type", type, "variance_model");
    if (type == "inverse_gamma") cfg.variance_model = VarianceModel::inverse_gamma;
    else if (type == "fixed") cfg.variance_model = VarianceModel::fixed;
    else throw ConfigError("variance_model.type must be 'inverse_gamma' or 'fixed'");
    read(v, "a", cfg.a, "variance_model");
    read(v, "b", cfg.b, "variance_model");
    read(v, "noise_variance", cfg.noise_variance, "variance_model");
  }
  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    reject_unknown(d, {"function", "points", "noise_sd", "domain", "grid_points", "grid_domain", "w1_points"},
                   "dataset");
    read(d, "function", cfg.data.function, "dataset");
    read(d, "points", cfg.data.points, "dataset");
    read(d, "noise_sd", cfg.data.noise_sd, "dataset");
    read_range(d, "domain", cfg.data.lo, cfg.data.hi, "dataset");
    read(d, "grid_points", cfg.data.grid_points, "dataset");
    read_range(d, "grid_domain", cfg.data.grid_lo, cfg.data.grid_hi, "dataset");
    read(d, "w1_points", cfg.data.w1_points, "dataset");
    reference_function(cfg.data.function, 0.0);
  }
  if (root.contains("sampling")) {
    const json& s = root["sampling"];
    reject_unknown(s,
                   {"draws", "repetitions", "burn_in", "thin", "hmc_steps", "max_tree_depth", "target_accept",
                    "parameterization", "likelihood_scale"},
                   "sampling");
    read(s, "draws", cfg.sampling.draws, "sampling");
    read(s, "repetitions", cfg.sampling.repetitions, "sampling");
    read(s, "burn_in", cfg.sampling.burn_in, "sampling");
    read(s, "thin", cfg.sampling.thin, "sampling");
    read(s, "hmc_steps", cfg.sampling.hmc_steps, "sampling");
    read(s, "max_tree_depth", cfg.sampling.max_tree_depth, "sampling");
    read(s, "target_accept", cfg.sampling.target_accept, "sampling");
    read(s, "likelihood_scale", cfg.sampling.likelihood_scale, "sampling");
    if (s.contains("parameterization")) {
      std::string p;
      read(s, "parameterization", p, "sampling");
      if (p == "non_centered") cfg.sampling.parameterization = Sigma2Parameterization::non_centered;
      else if (p == "centered") cfg.sampling.parameterization = Sigma2Parameterization::centered;
      else throw ConfigError("sampling.parameterization must be 'non_centered' or 'centered'");
    }
  }
  if (root.contains("kernel")) {
    const json& k = root["kernel"];
    reject_unknown(k, {"method"}, "kernel");
    std::string m = "auto";
    read(k, "method", m, "kernel");
    if (m == "auto") cfg.kernel_method.reset();
    else if (m == "analytic_erf") cfg.kernel_method = ExpectationMethod::analytic_erf;
    else if (m == "gauss_hermite") cfg.kernel_method = ExpectationMethod::gauss_hermite;
    else if (m == "monte_carlo") cfg.kernel_method = ExpectationMethod::monte_carlo;
    else throw ConfigError("kernel.method must be auto, analytic_erf, gauss_hermite or monte_carlo");
  }
  if (root.contains("w1")) {
    const json& w = root["w1"];
    reject_unknown(w, {"sliced_projections"}, "w1");
    read(w, "sliced_projections", cfg.sliced_projections, "w1");
  }
  if (root.contains("diagnostics")) {
    const json& d = root["diagnostics"];
    reject_unknown(d, {"settings", "restarts"}, "diagnostics");
    read(d, "restarts", cfg.restarts, "diagnostics");
    if (d.contains("settings")) {
      std::vector<std::vector<double>> raw;
      read(d, "settings", raw, "diagnostics");
      cfg.likelihood_settings.clear();
      for (const auto& pair : raw) {
        if (pair.size() != 2 || pair[1] != std::floor(pair[1]))
          throw ConfigError("diagnostics.settings entries must be [sigma2, integer dim]");
        cfg.likelihood_settings.emplace_back(pair[0], static_cast<int>(pair[1]));
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path + ": " + std::strerror(errno));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json settings = json::array();
  for (const auto& [s, n] : cfg.likelihood_settings) settings.push_back({s, n});
  json root{
      {"name", cfg.name},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"jobs", cfg.jobs},
      {"architecture",
       {{"input_dim", cfg.input_dim},
        {"hidden_layers", cfg.hidden_layers},
        {"activation", std::string(activation_name(cfg.activation))},
        {"widths", cfg.widths}}},
      {"variance_model",
       {{"type", cfg.variance_model == VarianceModel::inverse_gamma ? "inverse_gamma" : "fixed"},
        {"a", cfg.a},
        {"b", cfg.b},
        {"noise_variance", cfg.noise_variance}}},
      {"dataset",
       {{"function", cfg.data.function},
        {"points", cfg.data.points},
        {"noise_sd", cfg.data.noise_sd},
        {"domain", {cfg.data.lo, cfg.data.hi}},
        {"grid_points", cfg.data.grid_points},
        {"grid_domain", {cfg.data.grid_lo, cfg.data.grid_hi}},
        {"w1_points", cfg.data.w1_points}}},
      {"sampling",
       {{"draws", cfg.sampling.draws},
        {"repetitions", cfg.sampling.repetitions},
        {"burn_in", cfg.sampling.burn_in},
        {"thin", cfg.sampling.thin},
        {"hmc_steps", cfg.sampling.hmc_steps},
        {"max_tree_depth", cfg.sampling.max_tree_depth},
        {"target_accept", cfg.sampling.target_accept},
        {"parameterization",
         cfg.sampling.parameterization == Sigma2Parameterization::non_centered ? "non_centered" : "centered"},
        {"likelihood_scale", cfg.sampling.likelihood_scale}}},
      {"kernel", {{"method", cfg.kernel_method ? method_name(*cfg.kernel_method) : std::string("auto")}}},
      {"w1", {{"sliced_projections", cfg.sliced_projections}}},
      {"diagnostics", {{"settings", settings}, {"restarts", cfg.restarts}}},
  };
  json vars{{"weight", cfg.weight_variance}, {"bias", cfg.bias_variance}};
  if (cfg.first_layer_bias_variance) vars["first_layer_bias"] = *cfg.first_layer_bias_variance;
  root["variances"] = vars;
  return root.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = json::parse(config_to_json(cfg)).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// --- data -------------------------------------------------------------------

Dataset make_dataset(const ExperimentConfig& cfg) {
  const int k = cfg.data.points;
  RngStream rng(cfg.seed, 0xda7a);
  std::vector<double> xs(static_cast<std::size_t>(k));
  for (double& x : xs) x = cfg.data.lo + (cfg.data.hi - cfg.data.lo) * rng.uniform();
  std::sort(xs.begin(), xs.end());
  Eigen::MatrixXd x(cfg.input_dim, k), y(1, k);
  for (int i = 0; i < k; ++i) {
    x.col(i).setConstant(xs[static_cast<std::size_t>(i)]);
    y(0, i) = reference_function(cfg.data.function, xs[static_cast<std::size_t>(i)]) + cfg.data.noise_sd * rng.normal();
  }
  return Dataset(std::move(x), std::move(y));
}

Eigen::MatrixXd make_grid(const ExperimentConfig& cfg) {
  const int g = cfg.data.grid_points;
  Eigen::MatrixXd grid(cfg.input_dim, g);
  for (int i = 0; i < g; ++i) {
    const double t = g == 1 ? 0.5 : static_cast<double>(i) / (g - 1);
    grid.col(i).setConstant(cfg.data.grid_lo + t * (cfg.data.grid_hi - cfg.data.grid_lo));
  }
  return grid;
}

std::vector<int> w1_subgrid(int grid_points, int w1_points) {
  std::vector<int> idx;
  if (grid_points <= 0) return idx;
  w1_points = std::min(w1_points, grid_points);
  for (int j = 0; j < w1_points; ++j) {
    const double t = w1_points == 1 ? 0.5 : static_cast<double>(j) / (w1_points - 1);
    idx.push_back(static_cast<int>(std::lround(t * (grid_points - 1))));
  }
  return idx;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("slope fit needs paired values");
  if (x.size() < 4) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// --- experiments ------------------------------------------------------------

ConvergenceReport run_prior_convergence(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  ConvergenceReport report;
  report.experiment = "prior-convergence";
  if (cfg.data.points > 0) {
    report.constraint = constraint_for(cfg, make_dataset(cfg));
    log_constraint(report.constraint, report.experiment);
  }
  const Eigen::MatrixXd grid = make_grid(cfg);
  const std::vector<int> sub = w1_subgrid(cfg.data.grid_points, cfg.data.w1_points);
  const VarianceVector vars = cfg.variances();
  const Architecture base = cfg.architecture(cfg.widths.empty() ? 1 : cfg.widths.front());
  const KernelMatrix kernel = kernel_recursion(base, vars, grid, kernel_options(cfg, base));
  report.limit_location = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sub.size()));
  report.limit_scale_diag = entries(kernel.values().diagonal(), sub);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(grid.cols());
  const int n = cfg.sampling.draws;

  report.rows.resize(cfg.widths.size());
  if (grid.cols() == 0) {
    fill_empty_grid_rows(report, cfg);
    finish_report(report, cfg, start);
    return report;
  }
  parallel_for(static_cast<int>(cfg.widths.size()), cfg.jobs, [&](int wi) {
    const auto t0 = std::chrono::steady_clock::now();
    const int width = cfg.widths[static_cast<std::size_t>(wi)];
    const Architecture arch = cfg.architecture(width);
    // zero bias variances are allowed here: the prior is a point mass in those coordinates
    const Eigen::VectorXd sd = prior_standard_deviations(arch, vars);
    WidthResult& row = report.rows[static_cast<std::size_t>(wi)];
    row.width = width;
    row.seed = width_seed(cfg.seed, width);
    std::vector<RepetitionDraws> reps(static_cast<std::size_t>(cfg.sampling.repetitions));
    for (int r = 0; r < cfg.sampling.repetitions; ++r) {
      RngStream rng(row.seed, static_cast<std::uint64_t>(r));
      RepetitionDraws& d = reps[static_cast<std::size_t>(r)];
      d.model.resize(n, grid.cols());
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd theta(sd.size());
        for (Eigen::Index j = 0; j < sd.size(); ++j) theta[j] = sd[j] * rng.normal();
        d.model.row(i) = forward(arch, ParamVector(arch, std::move(theta)), grid).row(0);
      }
      d.limit = sample_mvn_rows(zero, kernel.values(), n, rng);
    }
    score_width(row, reps, sub, cfg.sliced_projections, row.seed);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_info("prior-convergence width " + std::to_string(width) + ": W1 " + format_double(row.w1));
  });
  finish_report(report, cfg, start);
  return report;
}

namespace {

template <class ChainFn, class LimitFn>
ConvergenceReport posterior_style(const ExperimentConfig& cfg, const std::string& experiment, ChainFn chain,
                                  LimitFn limit, std::chrono::steady_clock::time_point start) {
  ConvergenceReport report;
  report.experiment = experiment;
  const Eigen::MatrixXd grid = make_grid(cfg);
  const std::vector<int> sub = w1_subgrid(cfg.data.grid_points, cfg.data.w1_points);
  const int n = cfg.sampling.draws;
  const int reps = cfg.sampling.repetitions;
  report.rows.resize(cfg.widths.size());
  if (grid.cols() == 0) {
    fill_empty_grid_rows(report, cfg);
    finish_report(report, cfg, start);
    return report;
  }
  parallel_for(static_cast<int>(cfg.widths.size()), cfg.jobs, [&](int wi) {
    const auto t0 = std::chrono::steady_clock::now();
    const int width = cfg.widths[static_cast<std::size_t>(wi)];
    WidthResult& row = report.rows[static_cast<std::size_t>(wi)];
    row.width = width;
    row.seed = width_seed(cfg.seed, width);
    const PosteriorSamples post = chain(width, row.seed, grid);
    row.mean_accept = post.diagnostics.mean_accept;
    row.sigma2_mean = post.diagnostics.sigma2_mean;
    std::vector<RepetitionDraws> draws(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      RngStream rng(row.seed, 0x11a1700ULL + static_cast<std::uint64_t>(r));
      draws[static_cast<std::size_t>(r)].model = interleaved_rows(post.evaluations, r, reps);
      draws[static_cast<std::size_t>(r)].limit = limit(n, rng);
    }
    score_width(row, draws, sub, cfg.sliced_projections, row.seed);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_info(experiment + " width " + std::to_string(width) + ": W1 " + format_double(row.w1) + " (" +
             format_double(row.seconds) + " s, accept " + format_double(row.mean_accept) + ")");
  });
  finish_report(report, cfg, start);
  return report;
}

}  // namespace

ConvergenceReport run_posterior_convergence(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const Dataset data = make_dataset(cfg);
  const std::optional<ConstraintReport> constraint = constraint_for(cfg, data);
  log_constraint(constraint, "posterior-convergence");
  const Eigen::MatrixXd grid = make_grid(cfg);
  const std::vector<int> sub = w1_subgrid(cfg.data.grid_points, cfg.data.w1_points);
  const VarianceVector vars = cfg.variances();
  const Architecture base = cfg.architecture(cfg.widths.empty() ? 1 : cfg.widths.front());
  const KernelMatrix kprime =
      rescaled_kernel(base, vars, join_inputs(data.x(), grid), kernel_options(cfg, base), data.size());
  const StudentTPosterior tp = tp_posterior_predict(kprime, data.y().row(0).transpose(), cfg.a, cfg.b);

  auto chain = [&](int width, std::uint64_t seed, const Eigen::MatrixXd& g) {
    return gibbs_run(cfg.architecture(width), vars, cfg.a, cfg.b, data, g, gibbs_config(cfg, seed));
  };
  auto limit = [&](int n, RngStream& rng) { return sample_mvt_rows(tp.dof, tp.location, tp.scale, n, rng); };
  ConvergenceReport report = posterior_style(cfg, "posterior-convergence", chain, limit, start);
  report.constraint = constraint;
  if (!sub.empty()) {
    report.limit_location = entries(tp.location, sub);
    report.limit_scale_diag = entries(tp.scale.diagonal(), sub);
  }
  report.limit_dof = tp.dof;
  return report;
}

ConvergenceReport run_gaussian_baseline(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const Dataset data = make_dataset(cfg);
  const Eigen::MatrixXd grid = make_grid(cfg);
  const std::vector<int> sub = w1_subgrid(cfg.data.grid_points, cfg.data.w1_points);
  const VarianceVector vars = cfg.variances();
  const Architecture base = cfg.architecture(cfg.widths.empty() ? 1 : cfg.widths.front());
  const KernelMatrix k = kernel_recursion(base, vars, join_inputs(data.x(), grid), kernel_options(cfg, base),
                                          data.size());
  const GaussianPosterior gp =
      gp_posterior(k.train_block(), k.cross_block(), k.test_block(), data.y().row(0).transpose(), cfg.noise_variance);

  auto chain = [&](int width, std::uint64_t seed, const Eigen::MatrixXd& g) {
    return gibbs_run_fixed_variance(cfg.architecture(width), vars, cfg.noise_variance, data, g,
                                    gibbs_config(cfg, seed));
  };
  auto limit = [&](int n, RngStream& rng) { return sample_mvn_rows(gp.mean, gp.covariance, n, rng); };
  ConvergenceReport report = posterior_style(cfg, "gaussian-baseline", chain, limit, start);
  if (data.size() > 0) {
    report.constraint = constraint_for(cfg, data);
    log_constraint(report.constraint, "gaussian-baseline");
  }
  if (!sub.empty()) {
    report.limit_location = entries(gp.mean, sub);
    report.limit_scale_diag = entries(gp.covariance.diagonal(), sub);
  }
  return report;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  ComparisonReport report;
  report.config_hash = config_hash(cfg);
  const Dataset data = make_dataset(cfg);
  report.constraint = constraint_for(cfg, data);
  log_constraint(report.constraint, "compare");
  const Eigen::MatrixXd grid = make_grid(cfg);
  if (grid.cols() == 0) return report;
  const VarianceVector vars = cfg.variances();
  const Architecture base = cfg.architecture(cfg.widths.empty() ? 1 : cfg.widths.front());
  const Eigen::MatrixXd inputs = join_inputs(data.x(), grid);
  const KernelOptions opts = kernel_options(cfg, base);
  const Eigen::VectorXd y = data.y().row(0).transpose();
  const StudentTPosterior tp =
      tp_posterior_predict(rescaled_kernel(base, vars, inputs, opts, data.size()), y, cfg.a, cfg.b);
  const KernelMatrix k = kernel_recursion(base, vars, inputs, opts, data.size());
  const GaussianPosterior gp = gp_posterior(k.train_block(), k.cross_block(), k.test_block(), y, cfg.noise_variance);
  report.tp_dof = tp.dof;

  const boost::math::students_t_distribution<double> t(tp.dof);
  const boost::math::normal_distribution<double> z;
  const double tq = boost::math::quantile(t, 0.975);
  const double zq = boost::math::quantile(z, 0.975);
  for (Eigen::Index i = 0; i < grid.cols(); ++i) {
    BandRow r;
    r.x = grid(0, i);
    const double ts = std::sqrt(std::max(tp.scale(i, i), 0.0));
    const double gs = std::sqrt(std::max(gp.covariance(i, i), 0.0));
    r.tp_mid = tp.location[i];
    r.tp_lo = r.tp_mid - tq * ts;
    r.tp_hi = r.tp_mid + tq * ts;
    r.gp_mid = gp.mean[i];
    r.gp_lo = r.gp_mid - zq * gs;
    r.gp_hi = r.gp_mid + zq * gs;
    report.bands.push_back(r);
  }
  return report;
}

LikelihoodBoundRow likelihood_bounds(double sigma2, int dim, int restarts, RngStream& rng) {
  if (!(sigma2 > 0.0) || dim < 1 || restarts < 1) throw DomainError("likelihood_bounds needs sigma2 > 0, dim >= 1");
  LikelihoodBoundRow row;
  row.sigma2 = sigma2;
  row.dim = dim;
  const double log_norm = -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma2);
  row.sup_analytic = std::exp(log_norm);
  row.lip_analytic = std::exp(-0.5) / std::sqrt(sigma2) * row.sup_analytic;

  Eigen::VectorXd y(dim);
  for (int i = 0; i < dim; ++i) y[i] = rng.normal();
  auto log_l = [&](const Eigen::VectorXd& zz) { return log_norm - (y - zz).squaredNorm() / (2.0 * sigma2); };
  auto grad_log_l = [&](const Eigen::VectorXd& zz) { return Eigen::VectorXd((y - zz) / sigma2); };
  // log ||grad L|| = log(r / s) + log L with r = ||y - z||
  auto log_g = [&](const Eigen::VectorXd& zz) {
    const double r = (y - zz).norm();
    if (r == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(r / sigma2) + log_l(zz);
  };
  auto grad_log_g = [&](const Eigen::VectorXd& zz) {
    const Eigen::VectorXd d = zz - y;
    return Eigen::VectorXd(d * (1.0 / d.squaredNorm() - 1.0 / sigma2));
  };

  auto ascend = [&](auto f, auto grad, Eigen::VectorXd zz) {
    double fz = f(zz);
    double step = sigma2;
    for (int it = 0; it < 20000; ++it) {
      const Eigen::VectorXd g = grad(zz);
      if (g.norm() < 1e-14) break;
      bool moved = false;
      while (step > 1e-20) {
        const Eigen::VectorXd cand = zz + step * g;
        const double fc = f(cand);
        if (fc > fz) {
          zz = cand;
          fz = fc;
          moved = true;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    return std::pair<Eigen::VectorXd, double>(zz, fz);
  };

  row.sup_numeric = 0.0;
  row.lip_numeric = 0.0;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd z0(dim);
    for (int i = 0; i < dim; ++i) z0[i] = y[i] + 3.0 * std::sqrt(sigma2) * rng.normal();
    const auto [zs, fs] = ascend(log_l, grad_log_l, z0);
    row.sup_numeric = std::max(row.sup_numeric, std::exp(fs));
    const auto [zg, fg] = ascend(log_g, grad_log_g, z0);
    if (std::exp(fg) > row.lip_numeric) {
      row.lip_numeric = std::exp(fg);
      row.argmax_residual_sq = (y - zg).squaredNorm();
    }
  }
  return row;
}

DiagnosticsReport run_bound_diagnostics(const ExperimentConfig& cfg) {
  cfg.validate();
  DiagnosticsReport report;
  report.config_hash = config_hash(cfg);
  const Dataset data = make_dataset(cfg);
  report.constraint = constraint_for(cfg, data);
  log_constraint(report.constraint, "diagnostics");
  RngStream rng(cfg.seed, 0xd1a9);
  for (const auto& [s, n] : cfg.likelihood_settings) report.rows.push_back(likelihood_bounds(s, n, cfg.restarts, rng));
  return report;
}

// --- output -----------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit_figure_data(const ConvergenceReport& report, const std::string& dir, const std::string& stem) {
  ensure_dir(dir);
  const std::filesystem::path base = std::filesystem::path(dir) / stem;
  {
    std::ofstream csv = open_output(base.string() + ".csv");
    csv << "width,w1,w1_lo,w1_hi,seed\n";
    for (const auto& r : report.rows)
      csv << r.width << ',' << format_double(r.w1) << ',' << format_double(r.w1_lo) << ','
          << format_double(r.w1_hi) << ',' << r.seed << '\n';
    if (!csv) throw std::runtime_error("write failed for " + base.string() + ".csv");
  }
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"width", r.width},
                    {"w1", r.w1},
                    {"w1_lo", r.w1_lo},
                    {"w1_hi", r.w1_hi},
                    {"repetitions", r.repetitions},
                    {"sliced_w1_full_grid", r.sliced_w1},
                    {"seed", r.seed},
                    {"seconds", r.seconds},
                    {"mean_accept", r.mean_accept},
                    {"sigma2_mean", r.sigma2_mean}});
  json meta{{"experiment", report.experiment},
            {"config_hash", hex(report.config_hash)},
            {"versions", versions_json()},
            {"slope", finite_or_nan(report.slope)},
            {"rows", rows},
            {"limit", {{"dof", report.limit_dof},
                       {"location", vector_json(report.limit_location)},
                       {"scale_diagonal", vector_json(report.limit_scale_diag)}}},
            {"constraint", constraint_json(report.constraint)},
            {"runtime_seconds", report.seconds}};
  std::ofstream js = open_output(base.string() + ".json");
  js << meta.dump(2) << '\n';
}

void emit_figure_data(const ComparisonReport& report, const std::string& dir, const std::string& stem) {
  ensure_dir(dir);
  const std::filesystem::path base = std::filesystem::path(dir) / stem;
  {
    std::ofstream csv = open_output(base.string() + ".csv");
    csv << "x,tp_lo,tp_mid,tp_hi,gp_lo,gp_mid,gp_hi\n";
    for (const auto& r : report.bands)
      csv << format_double(r.x) << ',' << format_double(r.tp_lo) << ',' << format_double(r.tp_mid) << ','
          << format_double(r.tp_hi) << ',' << format_double(r.gp_lo) << ',' << format_double(r.gp_mid) << ','
          << format_double(r.gp_hi) << '\n';
  }
  json meta{{"experiment", "compare"},
            {"config_hash", hex(report.config_hash)},
            {"versions", versions_json()},
            {"quantiles", {0.025, 0.5, 0.975}},
            {"tp_dof", report.tp_dof},
            {"constraint", constraint_json(report.constraint)}};
  std::ofstream js = open_output(base.string() + ".json");
  js << meta.dump(2) << '\n';
}

void emit_figure_data(const DiagnosticsReport& report, const std::string& dir, const std::string& stem) {
  ensure_dir(dir);
  const std::filesystem::path base = std::filesystem::path(dir) / stem;
  {
    std::ofstream csv = open_output(base.string() + ".csv");
    csv << "sigma2,dim,sup_analytic,sup_numeric,lip_analytic,lip_numeric,argmax_residual_sq\n";
    for (const auto& r : report.rows)
      csv << format_double(r.sigma2) << ',' << r.dim << ',' << format_double(r.sup_analytic) << ','
          << format_double(r.sup_numeric) << ',' << format_double(r.lip_analytic) << ','
          << format_double(r.lip_numeric) << ',' << format_double(r.argmax_residual_sq) << '\n';
  }
  json meta{{"experiment", "diagnostics"},
            {"config_hash", hex(report.config_hash)},
            {"versions", versions_json()},
            {"constraint", constraint_json(report.constraint)}};
  std::ofstream js = open_output(base.string() + ".json");
  js << meta.dump(2) << '\n';
}

std::vector<WidthResult> read_convergence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  std::string line;
  if (!std::getline(in, line) || line != "width,w1,w1_lo,w1_hi,seed")
    throw std::runtime_error(path + ": unexpected CSV header");
  std::vector<WidthResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 5) throw std::runtime_error(path + ": malformed row '" + line + "'");
    WidthResult r;
    r.width = std::stoi(f[0]);
    r.w1 = std::stod(f[1]);
    r.w1_lo = std::stod(f[2]);
    r.w1_hi = std::stod(f[3]);
    r.seed = std::stoull(f[4]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace tpbnn
