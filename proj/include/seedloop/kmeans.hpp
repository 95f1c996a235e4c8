#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace seedloop {

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<Point> centers;
  std::vector<int> assignment;
  /// Within-cluster sum of squares after each Lloyd iteration.
  std::vector<double> wcss_history;
  int iterations = 0;
  bool converged = false;  ///< assignments stopped changing before max_iters

  double wcss() const { return wcss_history.empty() ? 0.0 : wcss_history.back(); }
};

/// Seeded k-means++ initialisation followed by Lloyd iterations until the
/// assignment is stable or max_iters is reached. A cluster that empties is
/// refilled with the point farthest from its current center.
KMeansResult kmeans(std::span<const Point> points, int k, int max_iters, std::uint64_t seed);

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Sum of squared distances from each point to the mean of its cluster.
double partition_wcss(std::span<const Point> points, std::span<const int> assignment, int k);

} // namespace seedloop
