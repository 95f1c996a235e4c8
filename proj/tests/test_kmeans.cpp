#include <doctest.h>

#include <limits>
#include <set>

#include "seedloop/kmeans.hpp"
#include "seedloop/rng.hpp"

using namespace seedloop;

namespace {

std::vector<Point> two_blobs(Rng& rng, double gap = 50.0, double radius = 1.0) {
  std::normal_distribution<double> n(0.0, radius / 2);
  std::vector<Point> pts;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 10; ++i) pts.push_back({b * gap + n(rng), b * gap * 0.5 + n(rng)});
  return pts;
}

// exhaustive optimum over all 2-partitions, point 0 pinned to cluster 0
double brute_force_wcss(const std::vector<Point>& pts) {
  const int n = static_cast<int>(pts.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> assign(pts.size());
  for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
    for (int i = 1; i < n; ++i) assign[i] = (mask >> (i - 1)) & 1u;
    best = std::min(best, partition_wcss(pts, assign, 2));
  }
  return best;
}

} // namespace

TEST_CASE("single cluster is the mean") {
  const std::vector<Point> pts{{0, 0}, {2, 0}, {4, 6}};
  const auto r = kmeans(pts, 1, 10, 0);
  REQUIRE(r.centers.size() == 1);
  CHECK(r.centers[0][0] == doctest::Approx(2.0));
  CHECK(r.centers[0][1] == doctest::Approx(2.0));
}

TEST_CASE("one cluster per point") {
  const std::vector<Point> pts{{0, 0}, {5, 1}, {9, 9}, {-3, 4}};
  const auto r = kmeans(pts, 4, 10, 3);
  std::set<int> used(r.assignment.begin(), r.assignment.end());
  CHECK(used.size() == 4);
  CHECK(r.wcss() == doctest::Approx(0.0));
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(r.centers[r.assignment[i]] == pts[i]);
}

TEST_CASE("errors") {
  const std::vector<Point> pts{{0, 0}, {1, 1}};
  CHECK_THROWS(kmeans(pts, 3, 10, 0));
  CHECK_THROWS(kmeans(pts, 0, 10, 0));
}

TEST_CASE("two blobs reach the brute-force optimum") {
  Rng rng(17);
  for (int t = 0; t < 3; ++t) {
    const auto pts = two_blobs(rng);
    const auto r = kmeans(pts, 2, 100, t);
    CHECK(r.converged);
    for (int i = 0; i < 10; ++i) CHECK(r.assignment[i] == r.assignment[0]);
    for (int i = 10; i < 20; ++i) CHECK(r.assignment[i] == r.assignment[10]);
    CHECK(r.assignment[0] != r.assignment[10]);
    CHECK(r.wcss() == doctest::Approx(brute_force_wcss(pts)).epsilon(1e-9));
  }
}

TEST_CASE("wcss never increases across iterations") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::uniform_real_distribution<double> u(-10, 10);
    const int n = 5 + static_cast<int>(uniform_index(rng, 60));
    const int k = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(std::min(n, 8))));
    std::vector<Point> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    const auto r = kmeans(pts, k, 100, t);
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) CHECK(r.wcss_history[i] <= r.wcss_history[i - 1] + 1e-9);
    CHECK(r.wcss() == doctest::Approx(partition_wcss(pts, r.assignment, k)));
  }
}

TEST_CASE("deterministic given the seed") {
  Rng rng(8);
  std::vector<Point> pts(50);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const auto a = kmeans(pts, 5, 50, 11);
  const auto b = kmeans(pts, 5, 50, 11);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centers == b.centers);
}

TEST_CASE("duplicate points do not leave clusters empty") {
  std::vector<Point> pts(6, Point{1.0, 1.0});
  pts.push_back({5.0, 5.0});
  const auto r = kmeans(pts, 3, 20, 0);
  std::vector<int> sizes(3, 0);
  for (int a : r.assignment) ++sizes[a];
  for (int s : sizes) CHECK(s > 0);
}
