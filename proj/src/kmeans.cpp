#include "seedloop/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "seedloop/rng.hpp"

namespace seedloop {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

std::vector<Point> cluster_means(std::span<const Point> points, std::span<const int> assignment, int k) {
  const std::size_t dim = points.front().size();
  std::vector<Point> means(static_cast<std::size_t>(k), Point(dim, 0.0));
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& m = means[static_cast<std::size_t>(assignment[i])];
    for (std::size_t d = 0; d < dim; ++d) m[d] += points[i][d];
    ++sizes[static_cast<std::size_t>(assignment[i])];
  }
  for (std::size_t c = 0; c < means.size(); ++c)
    if (sizes[c] > 0)
      for (auto& v : means[c]) v /= static_cast<double>(sizes[c]);
  return means;
}

std::vector<int> assign(std::span<const Point> points, const std::vector<Point>& centers) {
  std::vector<int> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = squared_distance(points[i], centers[c]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    out[i] = arg;
  }
  return out;
}

std::vector<Point> kmeanspp_init(std::span<const Point> points, int k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Point> centers;
  std::vector<bool> chosen(n, false);
  std::size_t first = uniform_index(rng, n);
  centers.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centers[0]);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      // All remaining points coincide with a center.
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  }
  return centers;
}

// Moves, for each empty cluster, the point farthest from its center (taken
// from a cluster with more than one member) into it.
void repair_empty(std::span<const Point> points, std::vector<int>& assignment, std::vector<Point>& centers) {
  const std::size_t k = centers.size();
  std::vector<std::size_t> sizes(k, 0);
  for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
  for (std::size_t e = 0; e < k; ++e) {
    if (sizes[e] > 0) continue;
    double worst = -1.0;
    std::size_t arg = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      if (sizes[c] < 2) continue;
      const double d = squared_distance(points[i], centers[c]);
      if (d > worst) {
        worst = d;
        arg = i;
      }
    }
    if (arg == points.size()) break;  // every cluster is a singleton: nothing to move
    --sizes[static_cast<std::size_t>(assignment[arg])];
    assignment[arg] = static_cast<int>(e);
    sizes[e] = 1;
    centers[e] = points[arg];
  }
}

} // namespace

double partition_wcss(std::span<const Point> points, std::span<const int> assignment, int k) {
  if (points.empty()) return 0.0;
  const auto means = cluster_means(points, assignment, k);
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    s += squared_distance(points[i], means[static_cast<std::size_t>(assignment[i])]);
  return s;
}

KMeansResult kmeans(std::span<const Point> points, int k, int max_iters, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (static_cast<std::size_t>(k) > points.size())
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds the number of points (" +
                                std::to_string(points.size()) + ")");
  if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("kmeans: points have inconsistent dimensions");

  Rng rng(seed);
  KMeansResult r;
  r.centers = kmeanspp_init(points, k, rng);
  r.assignment = assign(points, r.centers);
  for (int it = 1; it <= max_iters; ++it) {
    repair_empty(points, r.assignment, r.centers);
    r.centers = cluster_means(points, r.assignment, k);
    double cost = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      cost += squared_distance(points[i], r.centers[static_cast<std::size_t>(r.assignment[i])]);
    r.wcss_history.push_back(cost);
    r.iterations = it;
    auto next = assign(points, r.centers);
    if (next == r.assignment) {
      r.converged = true;
      break;
    }
    if (it == max_iters) break;  // keep centers equal to the means of the returned assignment
    r.assignment = std::move(next);
  }
  return r;
}

} // namespace seedloop
