#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seedloop/classifier.hpp"
#include "seedloop/kmeans.hpp"

namespace seedloop {

/// -sum p ln p with 0 ln 0 = 0 (nats).
double predictive_entropy(const ProbVector& p);

struct PoolItem {
  std::string id;
  Point features;
  ProbVector probs;
  double entropy = 0.0;

  static PoolItem make(std::string id, Point features, ProbVector probs);
};

enum class FeatureSource { model_embedding, raw_pixels };

/// entropy_kmeans is the production rule; the other two exist for ablations
/// and baselines.
enum class AcquisitionStrategy { entropy_kmeans, top_entropy, random };

struct AcquisitionConfig {
  int top_k = 5000;
  int batch_size = 1000;
  int kmeans_max_iters = 100;
  std::uint64_t seed = 0;
  FeatureSource feature_source = FeatureSource::model_embedding;
  AcquisitionStrategy strategy = AcquisitionStrategy::entropy_kmeans;

  void validate() const;
  nlohmann::json to_json() const;
  static AcquisitionConfig from_json(const nlohmann::json& j);
};

std::string_view to_string(AcquisitionStrategy s);
AcquisitionStrategy parse_strategy(std::string_view s);
std::string_view to_string(FeatureSource s);
FeatureSource parse_feature_source(std::string_view s);

struct AcquiredItem {
  std::string id;
  ClassIndex suggested_label = 0;
  double entropy = 0.0;
  bool operator==(const AcquiredItem&) const = default;
};

struct AcquisitionBatch {
  int cycle = 0;
  std::vector<AcquiredItem> items;

  bool contains(std::string_view id) const;
  const AcquiredItem* find(std::string_view id) const;
  nlohmann::json to_json(const LabelSet& labels) const;
  static AcquisitionBatch from_json(const nlohmann::json& j, const LabelSet& labels);
};

/// The min(k, |pool|) highest-entropy items, descending; ties by ascending id.
std::vector<PoolItem> top_k_entropy(std::vector<PoolItem> pool, int k);

/// For each center in order, the nearest not-yet-selected candidate
/// (Euclidean; ties by ascending id).
std::vector<PoolItem> nearest_to_centers(const std::vector<PoolItem>& candidates, const std::vector<Point>& centers);

/// Selection over precomputed pool items; the model-free core of acquire_batch.
AcquisitionBatch select_batch(std::vector<PoolItem> pool, const AcquisitionConfig& config, int cycle);

/// predict -> features -> top-K entropy -> k-means -> nearest-to-center.
AcquisitionBatch acquire_batch(const Model& model, const Dataset& unlabeled, const AcquisitionConfig& config,
                               int cycle = 0);

/// Pool items for `unlabeled` under `model`.
std::vector<PoolItem> build_pool(const Model& model, const Dataset& unlabeled, FeatureSource source);

} // namespace seedloop
