#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seedloop/image.hpp"
#include "seedloop/labels.hpp"

namespace seedloop {

struct TrayImage {
  Image pixels;
  View view = View::top;
};

struct BoundingBox {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct SeedCrop {
  Image pixels;
  BoundingBox bbox;  ///< padded crop rectangle, clamped to the tray image
  double cx = 0.0;   ///< centroid of the segmented region (pixel coordinates)
  double cy = 0.0;
  std::int64_t area = 0;  ///< pixels in the segmented region
  int region = 0;         ///< label in SegmentationResult::regions
};

struct SegmentationConfig {
  enum class Threshold { otsu, fixed };
  Threshold threshold_method = Threshold::otsu;
  int fixed_threshold = 128;  ///< used with Threshold::fixed; foreground is gray < t
  int min_area_px = 100;
  int crop_padding_px = 8;
  int distance_peak_min_separation_px = 15;

  void validate() const;
};

/// Intermediate maps kept for inspection. `regions` holds one int per pixel:
/// 0 for background, 1..n for watershed regions.
struct SegmentationResult {
  int width = 0, height = 0;
  std::vector<std::uint8_t> foreground;
  std::vector<float> distance;
  std::vector<std::int32_t> regions;
  int region_count = 0;
  std::vector<std::pair<int, int>> markers;  ///< (x, y) per region, index = region - 1
  std::vector<SeedCrop> crops;
};

/// Marker-based watershed on the distance transform of the thresholded
/// foreground. Crops are sorted by (cy, cx).
std::vector<SeedCrop> segment_tray(const TrayImage& image, const SegmentationConfig& config = {});
SegmentationResult segment_tray_detailed(const TrayImage& image, const SegmentationConfig& config = {});

/// Otsu threshold over an 8-bit grayscale histogram; nullopt for a single-level image.
std::optional<int> otsu_threshold(const std::vector<std::uint8_t>& gray);

/// Flood from `markers` (label >= 1 at marker pixels, 0 elsewhere) in order of
/// increasing `elevation`, restricted to `mask`. Uses 8-connectivity; every mask
/// pixel reachable from a marker receives exactly one label.
std::vector<std::int32_t> watershed_flood(int width, int height, const std::vector<float>& elevation,
                                          const std::vector<std::uint8_t>& mask,
                                          const std::vector<std::int32_t>& markers);

struct ViewPair {
  std::size_t top = 0;     ///< index into the top crop list
  std::size_t bottom = 0;  ///< index into the bottom crop list
  std::string pair_id;
};

class PairingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mirrors bottom centroids (cx -> image_width - cx) and greedily matches
/// closest centroid pairs first. Throws PairingError when the counts differ.
std::vector<ViewPair> pair_views(const std::vector<SeedCrop>& top, const std::vector<SeedCrop>& bottom,
                                 int image_width, const std::string& pair_prefix = "pair");

} // namespace seedloop
