#include "seedloop/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>

#include <opencv2/imgproc.hpp>

namespace seedloop {

namespace {

constexpr std::array<std::pair<int, int>, 8> kNeighbors8{
    {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

std::vector<std::uint8_t> to_gray(const Image& im) {
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(im.width) * im.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double v = 0.299 * im.rgb[i * 3] + 0.587 * im.rgb[i * 3 + 1] + 0.114 * im.rgb[i * 3 + 2];
    gray[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return gray;
}

// Drops 8-connected foreground components smaller than min_area; returns the
// component label map of what remains.
cv::Mat remove_small_components(cv::Mat& mask, int min_area) {
  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(mask, labels, stats, centroids, 8, CV_32S);
  for (int y = 0; y < mask.rows; ++y) {
    auto* m = mask.ptr<std::uint8_t>(y);
    auto* l = labels.ptr<std::int32_t>(y);
    for (int x = 0; x < mask.cols; ++x) {
      if (l[x] > 0 && stats.at<int>(l[x], cv::CC_STAT_AREA) < min_area) {
        m[x] = 0;
        l[x] = 0;
      }
    }
  }
  (void)n;
  return labels;
}

std::vector<std::pair<int, int>> find_markers(const cv::Mat& dist, const cv::Mat& components, int separation) {
  const int w = dist.cols, h = dist.rows;
  cv::Mat window_max;
  const int k = 2 * separation + 1;
  cv::dilate(dist, window_max, cv::getStructuringElement(cv::MORPH_RECT, cv::Size(k, k)));

  struct Candidate {
    float d;
    int x, y;
  };
  std::vector<Candidate> candidates;
  for (int y = 0; y < h; ++y) {
    const float* dp = dist.ptr<float>(y);
    const float* mp = window_max.ptr<float>(y);
    for (int x = 0; x < w; ++x)
      if (dp[x] > 0.0f && dp[x] >= mp[x]) candidates.push_back({dp[x], x, y});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.d, a.y, a.x) < std::tie(a.d, b.y, b.x);
  });

  std::vector<std::pair<int, int>> accepted;
  const double min_sq = static_cast<double>(separation) * separation;
  for (const auto& c : candidates) {
    bool ok = true;
    for (const auto& [ax, ay] : accepted) {
      const double dx = ax - c.x, dy = ay - c.y;
      if (dx * dx + dy * dy < min_sq) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.emplace_back(c.x, c.y);
  }

  // A component whose own maximum was suppressed by a brighter neighbour
  // within the separation radius still needs a marker.
  double max_label = 0;
  cv::minMaxLoc(components, nullptr, &max_label);
  std::vector<bool> has_marker(static_cast<std::size_t>(max_label) + 1, false);
  for (const auto& [x, y] : accepted) has_marker[static_cast<std::size_t>(components.at<std::int32_t>(y, x))] = true;
  std::vector<std::tuple<float, int, int>> best(has_marker.size(), {-1.0f, 0, 0});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto l = static_cast<std::size_t>(components.at<std::int32_t>(y, x));
      if (l == 0 || has_marker[l]) continue;
      const float d = dist.at<float>(y, x);
      if (d > std::get<0>(best[l])) best[l] = {d, x, y};
    }
  for (std::size_t l = 1; l < best.size(); ++l)
    if (!has_marker[l] && std::get<0>(best[l]) > 0.0f) accepted.emplace_back(std::get<1>(best[l]), std::get<2>(best[l]));
  return accepted;
}

} // namespace

void SegmentationConfig::validate() const {
  if (min_area_px < 1) throw std::invalid_argument("min_area_px must be >= 1");
  if (crop_padding_px < 0) throw std::invalid_argument("crop_padding_px must be >= 0");
  if (distance_peak_min_separation_px < 1) throw std::invalid_argument("peak separation must be >= 1");
  if (threshold_method == Threshold::fixed && (fixed_threshold < 0 || fixed_threshold > 256))
    throw std::invalid_argument("fixed threshold must be in [0, 256]");
}

std::optional<int> otsu_threshold(const std::vector<std::uint8_t>& gray) {
  std::array<std::int64_t, 256> hist{};
  for (auto v : gray) ++hist[v];
  const auto total = static_cast<double>(gray.size());
  if (std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) < 2) return std::nullopt;
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[static_cast<std::size_t>(i)]);
  double w0 = 0, sum0 = 0, best = -1;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += static_cast<double>(hist[static_cast<std::size_t>(t)]);
    sum0 += t * static_cast<double>(hist[static_cast<std::size_t>(t)]);
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  // Foreground is gray <= best_t, i.e. gray < best_t + 1.
  return best_t + 1;
}

std::vector<std::int32_t> watershed_flood(int width, int height, const std::vector<float>& elevation,
                                          const std::vector<std::uint8_t>& mask,
                                          const std::vector<std::int32_t>& markers) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (elevation.size() != n || mask.size() != n || markers.size() != n)
    throw std::invalid_argument("watershed_flood: map size mismatch");
  using Entry = std::tuple<float, std::uint64_t, std::int32_t>;  // elevation, insertion order, pixel
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::vector<std::int32_t> labels(n, 0);
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (markers[i] > 0 && mask[i]) {
      labels[i] = markers[i];
      queue.emplace(elevation[i], seq++, static_cast<std::int32_t>(i));
    }
  while (!queue.empty()) {
    const auto [elev, order, p] = queue.top();
    queue.pop();
    (void)elev;
    (void)order;
    const int px = p % width, py = p / width;
    for (const auto& [dx, dy] : kNeighbors8) {
      const int nx = px + dx, ny = py + dy;
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
      const auto q = static_cast<std::size_t>(ny) * width + nx;
      if (!mask[q] || labels[q] != 0) continue;
      labels[q] = labels[static_cast<std::size_t>(p)];
      queue.emplace(elevation[q], seq++, static_cast<std::int32_t>(q));
    }
  }
  return labels;
}

SegmentationResult segment_tray_detailed(const TrayImage& tray, const SegmentationConfig& config) {
  config.validate();
  const Image& im = tray.pixels;
  if (im.width < 64 || im.height < 64) throw std::invalid_argument("tray image must be at least 64x64");
  const int w = im.width, h = im.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  SegmentationResult res;
  res.width = w;
  res.height = h;
  res.foreground.assign(n, 0);
  res.distance.assign(n, 0.0f);
  res.regions.assign(n, 0);

  const auto gray = to_gray(im);
  std::optional<int> threshold;
  if (config.threshold_method == SegmentationConfig::Threshold::otsu) threshold = otsu_threshold(gray);
  else threshold = config.fixed_threshold;
  if (!threshold) return res;  // single gray level: nothing to separate

  cv::Mat mask(h, w, CV_8U);
  for (std::size_t i = 0; i < n; ++i) mask.data[i] = gray[i] < *threshold ? 255 : 0;
  cv::Mat components = remove_small_components(mask, config.min_area_px);
  if (cv::countNonZero(mask) == 0) return res;

  cv::Mat dist;
  cv::distanceTransform(mask, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);

  res.markers = find_markers(dist, components, config.distance_peak_min_separation_px);

  std::vector<std::int32_t> marker_map(n, 0);
  std::vector<float> elevation(n);
  for (int y = 0; y < h; ++y) {
    const float* dp = dist.ptr<float>(y);
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      res.foreground[i] = mask.data[i] ? 1 : 0;
      res.distance[i] = dp[x];
      elevation[i] = -dp[x];
    }
  }
  for (std::size_t k = 0; k < res.markers.size(); ++k) {
    const auto [x, y] = res.markers[k];
    marker_map[static_cast<std::size_t>(y) * w + x] = static_cast<std::int32_t>(k + 1);
  }
  res.regions = watershed_flood(w, h, elevation, res.foreground, marker_map);
  res.region_count = static_cast<int>(res.markers.size());

  struct Acc {
    std::int64_t area = 0;
    double sx = 0, sy = 0;
    int x0 = INT32_MAX, y0 = INT32_MAX, x1 = -1, y1 = -1;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(res.region_count) + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto l = res.regions[static_cast<std::size_t>(y) * w + x];
      if (l <= 0) continue;
      auto& a = acc[static_cast<std::size_t>(l)];
      ++a.area;
      a.sx += x;
      a.sy += y;
      a.x0 = std::min(a.x0, x);
      a.y0 = std::min(a.y0, y);
      a.x1 = std::max(a.x1, x);
      a.y1 = std::max(a.y1, y);
    }
  const int pad = config.crop_padding_px;
  for (int l = 1; l <= res.region_count; ++l) {
    const auto& a = acc[static_cast<std::size_t>(l)];
    if (a.area < config.min_area_px) continue;
    SeedCrop c;
    c.region = l;
    c.area = a.area;
    c.cx = a.sx / static_cast<double>(a.area);
    c.cy = a.sy / static_cast<double>(a.area);
    const int x0 = std::max(0, a.x0 - pad), y0 = std::max(0, a.y0 - pad);
    const int x1 = std::min(w - 1, a.x1 + pad), y1 = std::min(h - 1, a.y1 + pad);
    c.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    c.pixels = crop(im, c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h);
    res.crops.push_back(std::move(c));
  }
  std::sort(res.crops.begin(), res.crops.end(),
            [](const SeedCrop& a, const SeedCrop& b) { return std::tie(a.cy, a.cx) < std::tie(b.cy, b.cx); });
  return res;
}

std::vector<SeedCrop> segment_tray(const TrayImage& image, const SegmentationConfig& config) {
  return segment_tray_detailed(image, config).crops;
}

std::vector<ViewPair> pair_views(const std::vector<SeedCrop>& top, const std::vector<SeedCrop>& bottom,
                                 int image_width, const std::string& pair_prefix) {
  if (top.size() != bottom.size())
    throw PairingError("view count mismatch: " + std::to_string(top.size()) + " top crops vs " +
                       std::to_string(bottom.size()) + " bottom crops");
  struct Edge {
    double d2;
    std::size_t t, b;
  };
  std::vector<Edge> edges;
  edges.reserve(top.size() * bottom.size());
  for (std::size_t i = 0; i < top.size(); ++i)
    for (std::size_t j = 0; j < bottom.size(); ++j) {
      const double mx = image_width - bottom[j].cx;
      const double dx = top[i].cx - mx, dy = top[i].cy - bottom[j].cy;
      edges.push_back({dx * dx + dy * dy, i, j});
    }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.d2, a.t, a.b) < std::tie(b.d2, b.t, b.b); });
  std::vector<bool> top_used(top.size(), false), bottom_used(bottom.size(), false);
  std::vector<ViewPair> pairs;
  for (const auto& e : edges) {
    if (top_used[e.t] || bottom_used[e.b]) continue;
    top_used[e.t] = bottom_used[e.b] = true;
    pairs.push_back({e.t, e.b, {}});
  }
  std::sort(pairs.begin(), pairs.end(), [](const ViewPair& a, const ViewPair& b) { return a.top < b.top; });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", k);
    pairs[k].pair_id = pair_prefix + "-" + buf;
  }
  return pairs;
}

} // namespace seedloop
