#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tpbnn/rng.hpp"

namespace tpbnn {

// n draws of a d-dimensional vector, one per row.
struct SampleSet {
  Eigen::MatrixXd draws;
  std::string label;
  std::uint64_t seed = 0;

  SampleSet() = default;
  explicit SampleSet(Eigen::MatrixXd d, std::string l = {}, std::uint64_t s = 0);

  [[nodiscard]] int size() const { return static_cast<int>(draws.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(draws.cols()); }
  void validate() const;
};

inline constexpr int kDefaultAssignmentCap = 2048;

// Minimum-cost perfect matching of a square cost matrix; returns the column
// assigned to every row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

double w1_1d(const SampleSet& xs, const SampleSet& ys);
// (1/n sum |x_(i) - y_(i)|^p)^(1/p) over sorted samples.
double wp_1d(const SampleSet& xs, const SampleSet& ys, double p);

// Exact empirical W1 with Euclidean ground cost.
double w1_exact(const SampleSet& xs, const SampleSet& ys, int cap = kDefaultAssignmentCap);

// Mean of w1_1d over random unit directions.
double sliced_w1(const SampleSet& xs, const SampleSet& ys, int n_projections, RngStream& rng);

// Finitely supported measure with rational weights: atom i (row i) carries
// counts[i] / sum(counts).
struct DiscreteMeasure {
  Eigen::MatrixXd atoms;
  std::vector<long> counts;
};

// Exact W1 between discrete measures by replicating atoms to a common
// (LCM) sample size; throws NumericalError above the cap.
double w1_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu, int cap = kDefaultAssignmentCap);

}  // namespace tpbnn
