#pragma once

// Simulated annotator for headless runs: replays ground truth with optional
// label noise and a per-item latency model.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "seedloop/acquisition.hpp"
#include "seedloop/dataset.hpp"

namespace seedloop {

struct OracleConfig {
  std::unordered_map<std::string, ClassIndex> ground_truth;
  int num_classes = 4;
  double noise_rate = 0.0;          ///< in [0, 1)
  std::int64_t base_ms = 800;       ///< per item
  std::int64_t extra_ms = 400;      ///< added when the suggestion is overridden
  std::uint64_t seed = 0;

  void validate() const;
  /// Ground truth from every labeled record of `dataset`.
  static OracleConfig from_dataset(const Dataset& dataset);
};

struct SimulatedLabel {
  std::string id;
  ClassIndex label = 0;
  std::int64_t elapsed_ms = 0;
};

struct SimulatedAnnotation {
  std::vector<SimulatedLabel> labels;  ///< batch order
  std::int64_t elapsed_ms = 0;
};

/// Each item gets its ground-truth label, replaced by a uniformly random other
/// class with probability noise_rate. The flip draw is keyed by (seed, id), so
/// an item's outcome does not depend on batch composition or order.
SimulatedAnnotation simulated_annotate(const AcquisitionBatch& batch, const OracleConfig& oracle);

} // namespace seedloop
