#include <doctest.h>

#include <boost/math/distributions/inverse_gamma.hpp>
#include <cmath>

#include "support/stats.hpp"
#include "tpbnn/errors.hpp"
#include "tpbnn/hmc.hpp"

using namespace tpbnn;

namespace {

LogDensityFn gaussian(const Eigen::VectorXd& scales) {
  return [scales](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    const Eigen::VectorXd z = q.cwiseQuotient(scales);
    if (g) *g = -z.cwiseQuotient(scales);
    return -0.5 * z.squaredNorm();
  };
}

}  // namespace

TEST_CASE("standard normal in two dimensions") {
  RngStream rng(1);
  HmcConfig cfg;
  const HmcChain chain = hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d(3.0, -3.0), cfg, 10000, rng);
  REQUIRE(chain.draws.size() == 10000);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& q : chain.draws) mean += q;
  mean /= 10000.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& q : chain.draws) cov += (q - mean) * (q - mean).transpose();
  cov /= 10000.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
  CHECK((cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.1);
  CHECK(chain.diagnostics.mean_accept == doctest::Approx(0.8).epsilon(0.15));
  CHECK(chain.diagnostics.divergences == 0);
  CHECK(chain.diagnostics.tree_depths.size() == 10000);
}

TEST_CASE("log-transformed inverse gamma") {
  const double a = 3.0, b = 2.0;
  // u = log s has density ∝ exp(-a u - b e^{-u}).
  ScalarDensityFn f = [=](const Eigen::VectorXd& u) { return -a * u[0] - b * std::exp(-u[0]); };
  GradientFn g = [=](const Eigen::VectorXd& u) { return Eigen::VectorXd::Constant(1, -a + b * std::exp(-u[0])); };
  RngStream rng(2);
  const HmcChain chain = hmc_sample(f, g, Eigen::VectorXd::Zero(1), HmcConfig{}, 20000, rng);
  std::vector<double> s;
  for (std::size_t i = 0; i < chain.draws.size(); i += 10) s.push_back(std::exp(chain.draws[i][0]));
  boost::math::inverse_gamma_distribution<> ig(a, b);
  CHECK(testing::ks_one_sample(s, [&](double x) { return boost::math::cdf(ig, x); }).p_value > 0.01);
}

TEST_CASE("anisotropic target with a diagonal metric") {
  RngStream rng(3);
  const Eigen::Vector3d scales(0.01, 1.0, 30.0);
  HmcConfig cfg;
  cfg.inverse_metric = scales.cwiseAbs2();
  const HmcChain chain = hmc_sample(gaussian(scales), Eigen::Vector3d::Zero(), cfg, 4000, rng);
  std::vector<double> last;
  for (const auto& q : chain.draws) last.push_back(q[2] / 30.0);
  const auto m = testing::sample_moments(last);
  CHECK(m.variance == doctest::Approx(1.0).epsilon(0.1));
  CHECK(chain.diagnostics.step_size > 0.3);
}

TEST_CASE("empty chain and validation") {
  RngStream rng(4);
  const HmcChain empty = hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d::Zero(), HmcConfig{}, 0, rng);
  CHECK(empty.draws.empty());
  CHECK_THROWS_AS(hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d::Zero(), HmcConfig{}, -1, rng),
                  DomainError);
  HmcConfig bad;
  bad.target_accept = 1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = HmcConfig{};
  bad.max_tree_depth = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = HmcConfig{};
  bad.inverse_metric = Eigen::Vector2d(1.0, 0.0);
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("fixed step size is kept and trees respect the depth cap") {
  RngStream rng(5);
  HmcConfig cfg;
  cfg.step_size = 0.01;
  cfg.max_tree_depth = 3;
  cfg.warmup = 0;
  const HmcChain chain = hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d::Zero(), cfg, 50, rng);
  CHECK(chain.diagnostics.step_size == 0.01);
  for (int d : chain.diagnostics.tree_depths) CHECK(d <= 3);
  CHECK(chain.diagnostics.leapfrog_steps <= 50 * 7);
}

TEST_CASE("huge step sizes are flagged as divergent") {
  RngStream rng(6);
  HmcConfig cfg;
  cfg.step_size = 50.0;
  cfg.warmup = 0;
  LogDensityFn quartic = [](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    if (g) *g = -4.0 * q.array().cube().matrix();
    return -q.array().pow(4).sum();
  };
  const HmcChain chain = hmc_sample(quartic, Eigen::Vector2d(0.5, 0.5), cfg, 20, rng);
  CHECK(chain.diagnostics.divergences > 0);
  for (const auto& q : chain.draws) CHECK(q.allFinite());
}

TEST_CASE("same seed gives the same chain") {
  RngStream r1(7), r2(7);
  const auto c1 = hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d::Zero(), HmcConfig{}, 100, r1);
  const auto c2 = hmc_sample(gaussian(Eigen::Vector2d::Ones()), Eigen::Vector2d::Zero(), HmcConfig{}, 100, r2);
  for (std::size_t i = 0; i < 100; ++i) CHECK(c1.draws[i] == c2.draws[i]);
}

TEST_CASE("sampler step-size adaptation converges to the target") {
  RngStream rng(8);
  HmcConfig cfg;
  NutsSampler sampler(gaussian(Eigen::VectorXd::Constant(10, 1.0)), cfg);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(10);
  sampler.initialize_step_size(q, rng);
  for (int i = 0; i < 1000; ++i) sampler.adapt(sampler.transition(q, rng).accept_stat);
  sampler.finish_adaptation();
  double accept = 0.0;
  for (int i = 0; i < 2000; ++i) accept += sampler.transition(q, rng).accept_stat;
  CHECK(accept / 2000.0 == doctest::Approx(0.8).epsilon(0.1));
}
