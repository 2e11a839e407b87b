#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mcvit/autodiff.hpp"
#include "mcvit/rng.hpp"

namespace mcvit {

enum class ConsolidationMethod { none, random, coreset, kmeans };

ConsolidationMethod parse_consolidation_method(const std::string& name);
std::string to_string(ConsolidationMethod m);

struct ConsolidationConfig {
  ConsolidationMethod method = ConsolidationMethod::kmeans;
  int memories_per_segment = 1;  // K
  int kmeans_iters = 5;
  std::uint64_t seed = 0;

  void validate(Index tokens_per_segment) const;
};

inline void check_memory_count(Index n, Index k) {
  if (k < 1 || k > n)
    throw ConfigError("cannot consolidate " + std::to_string(n) + " rows into K=" + std::to_string(k));
}

/// K distinct indices from [0, n), uniform without replacement (partial
/// Fisher-Yates driven by `rng`), returned in ascending order.
std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng);

/// Greedy farthest-first traversal. The first pick is the row farthest from
/// the mean; each later pick maximizes its minimum squared distance to the
/// picks so far. Ties go to the lowest row index. Returned in pick order.
template <typename Derived>
std::vector<Index> coreset_indices(const Eigen::MatrixBase<Derived>& z, Index k) {
  using Scalar = typename Derived::Scalar;
  const Index n = z.rows();
  check_memory_count(n, k);
  const RowVectorX<Scalar> mean = z.colwise().mean();
  std::vector<Index> picks;
  picks.reserve(static_cast<std::size_t>(k));
  std::vector<Scalar> min_dist(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) min_dist[i] = (z.row(i) - mean).squaredNorm();
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (Index step = 0; step < k; ++step) {
    Index best = -1;
    for (Index i = 0; i < n; ++i)
      if (!taken[i] && (best < 0 || min_dist[i] > min_dist[best])) best = i;
    picks.push_back(best);
    taken[best] = true;
    for (Index i = 0; i < n; ++i) {
      const Scalar d = (z.row(i) - z.row(best)).squaredNorm();
      if (step == 0 || d < min_dist[i]) min_dist[i] = d;
    }
  }
  return picks;
}

template <typename Scalar>
struct KMeansResult {
  MatrixX<Scalar> centroids;  // K x d
  Matrix weights;             // K x N, centroids == weights * z
  std::vector<Index> assignment;
  std::vector<Scalar> objective;  // at init, then after each iteration
};

/// Sum over rows of the squared distance to the nearest centroid.
template <typename DerivedZ, typename DerivedC>
typename DerivedZ::Scalar kmeans_objective(const Eigen::MatrixBase<DerivedZ>& z,
                                           const Eigen::MatrixBase<DerivedC>& centroids) {
  using Scalar = typename DerivedZ::Scalar;
  Scalar total = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < centroids.rows(); ++c) best = std::min(best, (z.row(i) - centroids.row(c)).squaredNorm());
    total += best;
  }
  return total;
}

/// Lloyd iterations from centroids z[init]. Assignment is to the nearest
/// centroid by squared distance (lowest centroid index on ties); an empty
/// cluster keeps its previous centroid.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& z, const std::vector<Index>& init,
                                              int iters) {
  using Scalar = typename Derived::Scalar;
  const Index n = z.rows(), k = static_cast<Index>(init.size()), d = z.cols();
  check_memory_count(n, k);
  if (iters < 0) throw ConfigError("kmeans_iters must be >= 0");

  KMeansResult<Scalar> r;
  r.centroids.resize(k, d);
  r.weights = Matrix::Zero(k, n);
  for (Index c = 0; c < k; ++c) {
    r.centroids.row(c) = z.row(init[c]);
    r.weights(c, init[c]) = 1.0;
  }
  r.assignment.assign(static_cast<std::size_t>(n), 0);
  r.objective.push_back(kmeans_objective(z, r.centroids));

  for (int it = 0; it < iters; ++it) {
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      Scalar best_d = (z.row(i) - r.centroids.row(0)).squaredNorm();
      for (Index c = 1; c < k; ++c) {
        const Scalar dist = (z.row(i) - r.centroids.row(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      r.assignment[i] = best;
    }
    MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(k, d);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.assignment[i]) += z.row(i);
      ++counts[r.assignment[i]];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      r.centroids.row(c) = sums.row(c) / static_cast<Scalar>(counts[c]);
      r.weights.row(c).setZero();
      for (Index i = 0; i < n; ++i)
        if (r.assignment[i] == c) r.weights(c, i) = 1.0 / static_cast<double>(counts[c]);
    }
    r.objective.push_back(kmeans_objective(z, r.centroids));
  }
  return r;
}

Matrix consolidate_random(const Matrix& z, Index k, Rng& rng);
Matrix consolidate_coreset(const Matrix& z, Index k);
Matrix consolidate_kmeans(const Matrix& z, Index k, int iters, Rng& rng);

/// Differentiable consolidation of one segment's activations to K rows.
/// Selections are made on values; gradients flow to the selected rows (or,
/// for k-means, to the cluster members with their averaging weights).
ad::Var consolidate(const ad::Var& z, const ConsolidationConfig& cfg, Rng& rng);

}  // namespace mcvit
