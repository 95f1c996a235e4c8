#pragma once

// Procedural seed-crop images for desk-scale experiments and tests. Each of
// the four corn classes gets a visual signature on a yellow elliptical kernel:
// broken (one end cut off, pale fracture edge), discolored (brown patch),
// pure (nothing), silkcut (thin dark crack). A per-image severity makes some
// examples subtle, so the task is learnable but not trivial.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "seedloop/dataset.hpp"
#include "seedloop/rng.hpp"

namespace seedloop::synthetic {

struct SeedImageConfig {
  int size = 32;
  double noise_sigma = 10.0;
  double severity_min = 0.25;
  double severity_max = 1.0;
};

Image render_seed(ClassIndex cls, const SeedImageConfig& config, Rng& rng);

/// per_class[c] images of class c; ids are "<prefix>-<class name>-<nnnnn>".
Dataset make_seed_dataset(std::span<const int> per_class, std::uint64_t seed, const std::string& prefix,
                          const SeedImageConfig& config = {});

/// Four well-separated solid colours with mild jitter.
Image render_solid(ClassIndex cls, int size, Rng& rng);
Dataset make_solid_dataset(std::span<const int> per_class, int size, std::uint64_t seed, const std::string& prefix);

/// White tray with dark elliptical seeds at the given centres.
struct TraySeed {
  double cx, cy, rx, ry;
};
Image render_tray(int width, int height, std::span<const TraySeed> seeds);

/// Writes in-memory pixels under `dir` and returns the dataset with relative
/// paths rooted at `dir` (records that already have a path are kept as is).
Dataset write_images(const Dataset& dataset, const std::filesystem::path& dir);

} // namespace seedloop::synthetic
