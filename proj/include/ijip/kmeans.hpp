#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ijip/common.hpp"

namespace ijip {

template <typename Scalar> struct KMeansResult {
  /// Cluster index per input row.
  std::vector<std::size_t> assignment;
  /// k x dim centroids.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> centroids;
  /// Sum of squared distances to assigned centroids.
  Scalar inertia = 0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Clusters left without members after the final iteration (only possible
  /// when there are fewer distinct points than k).
  std::size_t empty_clusters = 0;
};

/// Lloyd's algorithm from a seeded k-means++ initialization. Empty clusters
/// are reseeded with the point farthest from its centroid.
template <typename Derived>
KMeansResult<typename Derived::Scalar>
kmeans(const Eigen::MatrixBase<Derived> &points, std::size_t k,
       std::size_t max_iters, std::uint64_t seed) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = points.cols();
  if (k == 0) throw InvalidArgument("kmeans: k must be positive");
  if (k > n)
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(n) + " rows");

  std::mt19937_64 rng(mix64(seed ^ 0x6b6d65616e73ULL));
  KMeansResult<Scalar> res;
  res.centroids = Mat(static_cast<Eigen::Index>(k), dim);
  res.assignment.assign(n, 0);

  auto sq_dist = [&](std::size_t i, Eigen::Index c) {
    return (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(c))
        .squaredNorm();
  };

  // k-means++ seeding.
  std::vector<Scalar> d2(n, std::numeric_limits<Scalar>::max());
  std::size_t first = uniform_index(rng, n);
  res.centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(i, static_cast<Eigen::Index>(c - 1)));
      total += static_cast<double>(d2[i]);
    }
    std::size_t pick = 0;
    if (total > 0) {
      double target = uniform_real(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= static_cast<double>(d2[i]);
        if (target < 0 && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);
    }
    res.centroids.row(static_cast<Eigen::Index>(c)) =
        points.row(static_cast<Eigen::Index>(pick));
  }

  std::vector<std::size_t> counts(k);
  std::vector<Scalar> best(n);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      Scalar bd = std::numeric_limits<Scalar>::max();
      for (std::size_t c = 0; c < k; ++c) {
        const Scalar d = sq_dist(i, static_cast<Eigen::Index>(c));
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      best[i] = bd;
      if (res.assignment[i] != arg) changed = true;
      res.assignment[i] = arg;
    }
    res.iterations = it + 1;
    if (!changed) {
      res.converged = true;
      break;
    }

    // Update step.
    Mat sums = Mat::Zero(static_cast<Eigen::Index>(k), dim);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(res.assignment[i])) +=
          points.row(static_cast<Eigen::Index>(i));
      ++counts[res.assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(static_cast<Eigen::Index>(c)) =
            sums.row(static_cast<Eigen::Index>(c)) / static_cast<Scalar>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-fit point not already used.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && (far == n || best[i] > best[far])) far = i;
      if (far == n) continue;
      taken[far] = true;
      best[far] = 0;
      res.centroids.row(static_cast<Eigen::Index>(c)) =
          points.row(static_cast<Eigen::Index>(far));
    }
  }

  // Final assignment against the last centroids.
  std::fill(counts.begin(), counts.end(), 0);
  res.inertia = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    Scalar bd = std::numeric_limits<Scalar>::max();
    for (std::size_t c = 0; c < k; ++c) {
      const Scalar d = sq_dist(i, static_cast<Eigen::Index>(c));
      if (d < bd) {
        bd = d;
        arg = c;
      }
    }
    res.assignment[i] = arg;
    ++counts[arg];
    res.inertia += bd;
  }
  res.empty_clusters =
      static_cast<std::size_t>(std::count(counts.begin(), counts.end(), 0u));
  return res;
}

} // namespace ijip
