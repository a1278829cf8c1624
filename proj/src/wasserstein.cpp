#include "tpbnn/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tpbnn/errors.hpp"

namespace tpbnn {

SampleSet::SampleSet(Eigen::MatrixXd d, std::string l, std::uint64_t s)
    : draws(std::move(d)), label(std::move(l)), seed(s) {}

void SampleSet::validate() const {
  if (draws.rows() < 1) throw DimensionError("sample set needs at least one draw");
  if (!draws.allFinite()) throw DomainError("sample set contains non-finite entries");
}

namespace {

void require_matching(const SampleSet& xs, const SampleSet& ys) {
  xs.validate();
  ys.validate();
  if (xs.size() != ys.size()) throw DimensionError("sample sets must have equal sizes");
  if (xs.dim() != ys.dim()) throw DimensionError("sample sets must have equal dimension");
}

std::vector<double> sorted(const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end());
  return out;
}

double sorted_w1(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const std::vector<double> a = sorted(x), b = sorted(y);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace

// Shortest augmenting path with potentials (Jonker-Volgenant style), O(n^3).
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("assignment needs a square cost matrix");
  const int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

double w1_1d(const SampleSet& xs, const SampleSet& ys) {
  require_matching(xs, ys);
  if (xs.dim() != 1) throw DimensionError("w1_1d needs one-dimensional samples");
  return sorted_w1(xs.draws.col(0), ys.draws.col(0));
}

double wp_1d(const SampleSet& xs, const SampleSet& ys, double p) {
  require_matching(xs, ys);
  if (xs.dim() != 1) throw DimensionError("wp_1d needs one-dimensional samples");
  if (!(p >= 1.0)) throw DomainError("p must be >= 1");
  const std::vector<double> a = sorted(xs.draws.col(0)), b = sorted(ys.draws.col(0));
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(total / static_cast<double>(a.size()), 1.0 / p);
}

double w1_exact(const SampleSet& xs, const SampleSet& ys, int cap) {
  require_matching(xs, ys);
  const int n = xs.size();
  if (n > cap)
    throw NumericalError("exact W1 limited to " + std::to_string(cap) + " draws (got " + std::to_string(n) +
                         "); use sliced_w1 for larger samples");
  if (xs.dim() == 1) return sorted_w1(xs.draws.col(0), ys.draws.col(0));
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (xs.draws.row(i) - ys.draws.row(j)).norm();
  const std::vector<int> match = solve_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, match[i]);
  return total / n;
}

double sliced_w1(const SampleSet& xs, const SampleSet& ys, int n_projections, RngStream& rng) {
  require_matching(xs, ys);
  if (n_projections < 1) throw DomainError("need at least one projection");
  if (xs.dim() == 1) return sorted_w1(xs.draws.col(0), ys.draws.col(0));
  double total = 0.0;
  Eigen::VectorXd dir(xs.dim());
  for (int p = 0; p < n_projections; ++p) {
    double norm = 0.0;
    while (norm < 1e-12) {
      for (int i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
      norm = dir.norm();
    }
    dir /= norm;
    total += sorted_w1(xs.draws * dir, ys.draws * dir);
  }
  return total / n_projections;
}

namespace {

SampleSet replicate(const DiscreteMeasure& m, long total, long target) {
  const long factor = target / total;
  Eigen::MatrixXd out(target, m.atoms.cols());
  long row = 0;
  for (std::size_t i = 0; i < m.counts.size(); ++i)
    for (long r = 0; r < m.counts[i] * factor; ++r) out.row(row++) = m.atoms.row(static_cast<Eigen::Index>(i));
  return SampleSet(std::move(out));
}

long total_count(const DiscreteMeasure& m) {
  if (static_cast<Eigen::Index>(m.counts.size()) != m.atoms.rows())
    throw DimensionError("one count per atom required");
  long total = 0;
  for (long c : m.counts) {
    if (c < 0) throw DomainError("counts must be non-negative");
    total += c;
  }
  if (total == 0) throw DomainError("measure has zero total mass");
  return total;
}

}  // namespace

double w1_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu, int cap) {
  if (mu.atoms.cols() != nu.atoms.cols()) throw DimensionError("measures live in different dimensions");
  const long tm = total_count(mu), tn = total_count(nu);
  const long size = std::lcm(tm, tn);
  if (size > cap)
    throw NumericalError("LCM replication needs " + std::to_string(size) + " points, above the cap of " +
                         std::to_string(cap));
  return w1_exact(replicate(mu, tm, size), replicate(nu, tn, size), cap);
}

}  // namespace tpbnn
