#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <opencv2/imgproc.hpp>

#include "seedloop/segmentation.hpp"
#include "seedloop/synthetic.hpp"

using namespace seedloop;

namespace {

TrayImage tray(std::vector<synthetic::TraySeed> seeds, int size = 512, View view = View::top) {
  return {synthetic::render_tray(size, size, seeds), view};
}

SeedCrop at(double cx, double cy) {
  SeedCrop c;
  c.cx = cx;
  c.cy = cy;
  return c;
}

} // namespace

TEST_CASE("three disjoint disks give three crops at the disk centres") {
  const std::vector<synthetic::TraySeed> disks{{120, 100, 30, 30}, {380, 150, 30, 30}, {250, 400, 30, 30}};
  const auto img = tray(disks);
  const auto res = segment_tray_detailed(img);
  REQUIRE(res.crops.size() == 3);

  // connected components of the same mask give the reference centroids
  cv::Mat mask(res.height, res.width, CV_8U, const_cast<std::uint8_t*>(res.foreground.data()));
  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(mask, labels, stats, centroids, 8);
  REQUIRE(n - 1 == 3);
  for (const auto& crop : res.crops) {
    double best = 1e9;
    for (int i = 1; i < n; ++i)
      best = std::min(best, std::hypot(crop.cx - centroids.at<double>(i, 0), crop.cy - centroids.at<double>(i, 1)));
    CHECK(best <= 2.0);
    double to_disk = 1e9;
    for (const auto& d : disks) to_disk = std::min(to_disk, std::hypot(crop.cx - d.cx, crop.cy - d.cy));
    CHECK(to_disk <= 2.0);
  }
  // reading order
  CHECK(res.crops[0].cy <= res.crops[1].cy);
  CHECK(res.crops[1].cy <= res.crops[2].cy);
}

TEST_CASE("blank tray gives no crops") {
  const auto img = tray({});
  CHECK(segment_tray(img).empty());
}

TEST_CASE("watershed splits two overlapping disks") {
  const double r = 30;
  const double gap = 2 * r - 0.2 * r;
  const auto img = tray({{200, 250, r, r}, {200 + gap, 250, r, r}});
  const auto res = segment_tray_detailed(img);

  cv::Mat mask(res.height, res.width, CV_8U, const_cast<std::uint8_t*>(res.foreground.data()));
  cv::Mat labels;
  CHECK(cv::connectedComponents(mask, labels, 8) - 1 == 1);

  REQUIRE(res.crops.size() == 2);
  CHECK(std::abs(res.crops[0].cx - 200) < 6);
  CHECK(std::abs(res.crops[1].cx - (200 + gap)) < 6);
}

TEST_CASE("watershed regions partition the foreground") {
  const auto img = tray({{100, 100, 28, 20}, {150, 110, 30, 22}, {400, 380, 25, 35}, {300, 300, 20, 20}});
  const auto res = segment_tray_detailed(img);
  std::vector<std::int64_t> area(static_cast<std::size_t>(res.region_count) + 1, 0);
  for (std::size_t i = 0; i < res.regions.size(); ++i) {
    CHECK_MESSAGE((res.regions[i] > 0) == (res.foreground[i] != 0), "pixel " << i);
    ++area[static_cast<std::size_t>(res.regions[i])];
  }
  for (const auto& c : res.crops) {
    CHECK(c.area == area[static_cast<std::size_t>(c.region)]);
    CHECK(c.area >= SegmentationConfig{}.min_area_px);
    CHECK(c.area <= static_cast<std::int64_t>(c.bbox.w) * c.bbox.h);
    CHECK(c.bbox.x >= 0);
    CHECK(c.bbox.y >= 0);
    CHECK(c.bbox.x + c.bbox.w <= res.width);
    CHECK(c.bbox.y + c.bbox.h <= res.height);
  }
}

TEST_CASE("small specks are dropped and crops clamp to the border") {
  SegmentationConfig cfg;
  cfg.min_area_px = 200;
  cfg.crop_padding_px = 20;
  const auto img = tray({{5 + 25, 5 + 25, 25, 25}, {300, 300, 5, 5}}, 256);
  const auto crops = segment_tray(img, cfg);
  REQUIRE(crops.size() == 1);
  CHECK(crops[0].bbox.x == 0);
  CHECK(crops[0].bbox.y == 0);
}

TEST_CASE("segmentation is deterministic") {
  const auto img = tray({{100, 100, 28, 20}, {150, 110, 30, 22}, {400, 380, 25, 35}});
  const auto a = segment_tray(img);
  const auto b = segment_tray(img);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bbox == b[i].bbox);
    CHECK(a[i].pixels == b[i].pixels);
    CHECK(a[i].area == b[i].area);
  }
}

TEST_CASE("fixed threshold and otsu") {
  std::vector<std::uint8_t> gray(100, 240);
  std::fill(gray.begin(), gray.begin() + 30, 40);
  const auto t = otsu_threshold(gray);
  REQUIRE(t);
  CHECK(*t >= 40);
  CHECK(*t < 240);
  CHECK_FALSE(otsu_threshold(std::vector<std::uint8_t>(10, 7)));

  SegmentationConfig cfg;
  cfg.threshold_method = SegmentationConfig::Threshold::fixed;
  cfg.fixed_threshold = 128;
  CHECK(segment_tray(tray({{200, 200, 30, 30}}), cfg).size() == 1);
  cfg.min_area_px = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("pair single seed") {
  const auto pairs = pair_views({at(10, 10)}, {at(90, 10)}, 100);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].top == 0);
  CHECK(pairs[0].bottom == 0);
}

TEST_CASE("greedy pairing matches the brute-force best matching on a grid") {
  const int width = 300;
  const std::vector<std::pair<double, double>> seeds{{50, 50}, {150, 60}, {250, 200}};
  std::vector<SeedCrop> top, bottom;
  for (auto [x, y] : seeds) top.push_back(at(x, y));
  // bottom camera sees the mirror image, listed in a different order with a little jitter
  const std::vector<int> order{2, 0, 1};
  for (int i : order) bottom.push_back(at(width - seeds[i].first + 1.5, seeds[i].second - 1.0));

  const auto pairs = pair_views(top, bottom, width);
  REQUIRE(pairs.size() == 3);

  std::vector<int> perm{0, 1, 2}, best_perm;
  double best = 1e18;
  do {
    double total = 0;
    for (int t = 0; t < 3; ++t)
      total += std::hypot(top[t].cx - (width - bottom[perm[t]].cx), top[t].cy - bottom[perm[t]].cy);
    if (total < best) best = total, best_perm = perm;
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::set<std::string> ids;
  for (const auto& p : pairs) {
    CHECK(static_cast<int>(p.bottom) == best_perm[p.top]);
    CHECK(order[p.bottom] == static_cast<int>(p.top));
    ids.insert(p.pair_id);
  }
  CHECK(ids.size() == 3);
}

TEST_CASE("pairing is a perfect matching") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    std::vector<SeedCrop> top, bottom;
    std::uniform_real_distribution<double> u(0, 500);
    for (int i = 0; i < n; ++i) top.push_back(at(u(rng), u(rng)));
    for (int i = 0; i < n; ++i) bottom.push_back(at(u(rng), u(rng)));
    const auto pairs = pair_views(top, bottom, 500);
    std::set<std::size_t> ts, bs;
    for (const auto& p : pairs) {
      ts.insert(p.top);
      bs.insert(p.bottom);
    }
    CHECK(pairs.size() == static_cast<std::size_t>(n));
    CHECK(ts.size() == static_cast<std::size_t>(n));
    CHECK(bs.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("pairing count mismatch names both counts") {
  std::vector<SeedCrop> top{at(1, 1), at(2, 2), at(3, 3)}, bottom{at(1, 1), at(2, 2)};
  CHECK_THROWS_WITH_AS(pair_views(top, bottom, 10), doctest::Contains("3"), PairingError);
  CHECK_THROWS_WITH_AS(pair_views(top, bottom, 10), doctest::Contains("2"), PairingError);
}

TEST_CASE("segmented bottom tray pairs with its top tray") {
  const std::vector<synthetic::TraySeed> seeds{{100, 120, 25, 18}, {300, 140, 22, 30}, {220, 380, 28, 20}};
  std::vector<synthetic::TraySeed> mirrored;
  for (auto s : seeds) mirrored.push_back({512 - s.cx, s.cy, s.rx, s.ry});
  const auto top = segment_tray(tray(seeds));
  const auto bottom = segment_tray(tray(mirrored, 512, View::bottom));
  const auto pairs = pair_views(top, bottom, 512);
  REQUIRE(pairs.size() == 3);
  for (const auto& p : pairs) {
    CHECK(std::abs(top[p.top].cx - (512 - bottom[p.bottom].cx)) < 3);
    CHECK(std::abs(top[p.top].cy - bottom[p.bottom].cy) < 3);
  }
}
