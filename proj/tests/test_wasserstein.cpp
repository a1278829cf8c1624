#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "support/stats.hpp"
#include "support/w1_properties.hpp"
#include "tpbnn/errors.hpp"
#include "tpbnn/samplers.hpp"
#include "tpbnn/wasserstein.hpp"

using namespace tpbnn;
using testing::random_atoms;

namespace {

double brute_force_w1(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  std::vector<int> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) total += (x.row(i) - y.row(perm[i])).norm();
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("assignment solver finds the optimal permutation") {
  Eigen::MatrixXd cost(3, 3);
  cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const std::vector<int> m = solve_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < 3; ++i) total += cost(i, m[i]);
  CHECK(total == 5.0);
  CHECK(solve_assignment(Eigen::MatrixXd(0, 0)).empty());
  CHECK_THROWS_AS(solve_assignment(Eigen::MatrixXd::Zero(2, 3)), DimensionError);
}

TEST_CASE("one-dimensional W1") {
  Eigen::MatrixXd a(1, 1), b(1, 1);
  a << 0.0;
  b << 2.0;
  CHECK(w1_1d(SampleSet(a), SampleSet(b)) == 2.0);
  RngStream rng(1);
  const Eigen::MatrixXd x = random_atoms(5, 1, rng), y = random_atoms(5, 1, rng);
  CHECK(w1_1d(SampleSet(x), SampleSet(x)) == 0.0);
  CHECK(std::abs(w1_1d(SampleSet(x), SampleSet(y)) - brute_force_w1(x, y)) < 1e-12);
  CHECK(wp_1d(SampleSet(x), SampleSet(y), 1.0) == doctest::Approx(w1_1d(SampleSet(x), SampleSet(y))).epsilon(1e-14));
  CHECK(wp_1d(SampleSet(x), SampleSet(y), 2.0) >= w1_1d(SampleSet(x), SampleSet(y)));
  CHECK_THROWS_AS(wp_1d(SampleSet(x), SampleSet(y), 0.5), DomainError);
  CHECK_THROWS_AS(w1_1d(SampleSet(random_atoms(5, 2, rng)), SampleSet(random_atoms(5, 2, rng))), DimensionError);
}

TEST_CASE("exact W1 equals brute force and the sorted formula") {
  RngStream rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd x = random_atoms(6, 2, rng), y = random_atoms(6, 2, rng, 0.5);
    CHECK(std::abs(w1_exact(SampleSet(x), SampleSet(y)) - brute_force_w1(x, y)) < 1e-12);
  }
  const Eigen::MatrixXd x = random_atoms(40, 1, rng), y = random_atoms(40, 1, rng);
  Eigen::MatrixXd cost(40, 40);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) cost(i, j) = std::abs(x(i, 0) - y(j, 0));
  const auto m = solve_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < 40; ++i) total += cost(i, m[i]);
  CHECK(std::abs(total / 40.0 - w1_exact(SampleSet(x), SampleSet(y))) < 1e-12);
}

TEST_CASE("translation, scaling and metric axioms") {
  RngStream rng(3);
  const Eigen::MatrixXd x = random_atoms(30, 3, rng);
  const Eigen::RowVector3d shift(1.0, -2.0, 0.5);
  CHECK(w1_exact(SampleSet(x), SampleSet(x)) == 0.0);
  CHECK(std::abs(w1_exact(SampleSet(x), SampleSet(x.rowwise() + shift)) - shift.norm()) < 1e-12);
  const Eigen::MatrixXd y = random_atoms(30, 3, rng), z = random_atoms(30, 3, rng, 1.0);
  const double xy = w1_exact(SampleSet(x), SampleSet(y));
  for (double a : {0.5, 2.0, 7.0})
    CHECK(std::abs(w1_exact(SampleSet(a * x), SampleSet(a * y)) - a * xy) < 1e-10 * a * xy);
  CHECK(std::abs(w1_exact(SampleSet(y), SampleSet(x)) - xy) < 1e-12);
  CHECK(xy <= w1_exact(SampleSet(x), SampleSet(z)) + w1_exact(SampleSet(z), SampleSet(y)) + 1e-12);
  CHECK(xy > 0.0);
}

TEST_CASE("W1 input validation and cap") {
  RngStream rng(4);
  CHECK_THROWS_AS(w1_exact(SampleSet(random_atoms(3, 2, rng)), SampleSet(random_atoms(4, 2, rng))), DimensionError);
  CHECK_THROWS_AS(w1_exact(SampleSet(random_atoms(3, 2, rng)), SampleSet(random_atoms(3, 1, rng))), DimensionError);
  CHECK_THROWS_AS(w1_exact(SampleSet(Eigen::MatrixXd(0, 2)), SampleSet(Eigen::MatrixXd(0, 2))), DimensionError);
  Eigen::MatrixXd bad = random_atoms(3, 2, rng);
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(w1_exact(SampleSet(bad), SampleSet(bad)), DomainError);
  CHECK_THROWS_AS(w1_exact(SampleSet(random_atoms(20, 2, rng)), SampleSet(random_atoms(20, 2, rng)), 10),
                  NumericalError);
}

TEST_CASE("sliced W1") {
  RngStream rng(5);
  const Eigen::MatrixXd x = random_atoms(200, 3, rng), y = random_atoms(200, 3, rng, 0.3);
  CHECK(sliced_w1(SampleSet(x), SampleSet(x), 10, rng) == 0.0);
  const Eigen::MatrixXd a = random_atoms(50, 1, rng), b = random_atoms(50, 1, rng);
  CHECK(sliced_w1(SampleSet(a), SampleSet(b), 7, rng) == w1_1d(SampleSet(a), SampleSet(b)));
  RngStream r1(6), r2(7);
  const double s500 = sliced_w1(SampleSet(x), SampleSet(y), 500, r1);
  const double s1000 = sliced_w1(SampleSet(x), SampleSet(y), 1000, r2);
  CHECK(std::abs(s500 - s1000) < 0.05 * s1000);
  CHECK(s1000 <= w1_exact(SampleSet(x), SampleSet(y)));
  CHECK_THROWS_AS(sliced_w1(SampleSet(x), SampleSet(y), 0, rng), DomainError);
}

TEST_CASE("discrete measures") {
  DiscreteMeasure mu{Eigen::MatrixXd::Zero(2, 1), {1, 1}};
  mu.atoms(1, 0) = 1.0;
  DiscreteMeasure nu{Eigen::MatrixXd::Zero(1, 1), {3}};
  CHECK(w1_discrete(mu, nu) == doctest::Approx(0.5));
  DiscreteMeasure weighted{mu.atoms, {1, 2}};
  CHECK(w1_discrete(weighted, nu) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(w1_discrete(DiscreteMeasure{mu.atoms, {0, 0}}, nu), DomainError);
  CHECK_THROWS_AS(w1_discrete(DiscreteMeasure{mu.atoms, {1}}, nu), DimensionError);
  CHECK_THROWS_AS(w1_discrete(DiscreteMeasure{mu.atoms, {1, -1}}, nu), DomainError);
  CHECK_THROWS_AS(w1_discrete(DiscreteMeasure{mu.atoms, {1000, 999}}, DiscreteMeasure{nu.atoms, {7}}), NumericalError);
}

TEST_CASE("convexity and total-variation bound") {
  RngStream rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto c = testing::convexity_instance(rng);
    CHECK(c.holds());
    const auto t = testing::tv_instance(rng);
    CHECK(t.holds());
  }
}

TEST_CASE("W1 to Gaussian samples shrinks as Student-t dof grows") {
  RngStream rng(9);
  const Eigen::MatrixXd g = sample_mvn_rows(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 20000, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double nu : {1.5, 3.0, 30.0}) {
    const Eigen::MatrixXd t = sample_mvt_rows(nu, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 20000, rng);
    const double d = w1_1d(SampleSet(t), SampleSet(g));
    CHECK(d < prev);
    prev = d;
  }
}
