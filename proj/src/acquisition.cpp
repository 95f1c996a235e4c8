#include "seedloop/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace seedloop {

double predictive_entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values())
    if (v > 0.0) h -= v * std::log(v);
  return std::max(0.0, h);
}

PoolItem PoolItem::make(std::string id, Point features, ProbVector probs) {
  PoolItem item{std::move(id), std::move(features), std::move(probs), 0.0};
  item.entropy = predictive_entropy(item.probs);
  return item;
}

void AcquisitionConfig::validate() const {
  if (top_k < 1) throw std::invalid_argument("top_k must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (batch_size > top_k) throw std::invalid_argument("batch_size must not exceed top_k");
  if (kmeans_max_iters < 1) throw std::invalid_argument("kmeans_max_iters must be positive");
}

nlohmann::json AcquisitionConfig::to_json() const {
  return {{"top_k", top_k},
          {"batch_size", batch_size},
          {"kmeans_max_iters", kmeans_max_iters},
          {"seed", seed},
          {"feature_source", to_string(feature_source)},
          {"strategy", to_string(strategy)}};
}

AcquisitionConfig AcquisitionConfig::from_json(const nlohmann::json& j) {
  AcquisitionConfig c;
  c.top_k = j.value("top_k", c.top_k);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.kmeans_max_iters = j.value("kmeans_max_iters", c.kmeans_max_iters);
  c.seed = j.value("seed", c.seed);
  c.feature_source = parse_feature_source(j.value("feature_source", std::string("model_embedding")));
  c.strategy = parse_strategy(j.value("strategy", std::string("entropy_kmeans")));
  c.validate();
  return c;
}

std::string_view to_string(AcquisitionStrategy s) {
  switch (s) {
    case AcquisitionStrategy::entropy_kmeans: return "entropy_kmeans";
    case AcquisitionStrategy::top_entropy: return "top_entropy";
    case AcquisitionStrategy::random: return "random";
  }
  return "?";
}

AcquisitionStrategy parse_strategy(std::string_view s) {
  if (s == "entropy_kmeans") return AcquisitionStrategy::entropy_kmeans;
  if (s == "top_entropy") return AcquisitionStrategy::top_entropy;
  if (s == "random") return AcquisitionStrategy::random;
  throw std::invalid_argument("unknown acquisition strategy '" + std::string(s) + "'");
}

std::string_view to_string(FeatureSource s) {
  return s == FeatureSource::model_embedding ? "model_embedding" : "raw_pixels";
}

FeatureSource parse_feature_source(std::string_view s) {
  if (s == "model_embedding") return FeatureSource::model_embedding;
  if (s == "raw_pixels") return FeatureSource::raw_pixels;
  throw std::invalid_argument("unknown feature source '" + std::string(s) + "'");
}

bool AcquisitionBatch::contains(std::string_view id) const { return find(id) != nullptr; }

const AcquiredItem* AcquisitionBatch::find(std::string_view id) const {
  for (const auto& it : items)
    if (it.id == id) return &it;
  return nullptr;
}

nlohmann::json AcquisitionBatch::to_json(const LabelSet& labels) const {
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& it : items)
    items_json.push_back({{"id", it.id}, {"suggested_label", labels.name(it.suggested_label)}, {"entropy", it.entropy}});
  return {{"cycle", cycle}, {"items", items_json}};
}

AcquisitionBatch AcquisitionBatch::from_json(const nlohmann::json& j, const LabelSet& labels) {
  AcquisitionBatch b;
  b.cycle = j.at("cycle").get<int>();
  for (const auto& it : j.at("items"))
    b.items.push_back({it.at("id").get<std::string>(), labels.parse(it.at("suggested_label").get<std::string>()),
                       it.at("entropy").get<double>()});
  return b;
}

std::vector<PoolItem> top_k_entropy(std::vector<PoolItem> pool, int k) {
  if (k < 0) throw std::invalid_argument("top_k_entropy: k must be >= 0");
  std::sort(pool.begin(), pool.end(), [](const PoolItem& a, const PoolItem& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    return a.id < b.id;
  });
  pool.resize(std::min(pool.size(), static_cast<std::size_t>(k)));
  return pool;
}

std::vector<PoolItem> nearest_to_centers(const std::vector<PoolItem>& candidates, const std::vector<Point>& centers) {
  if (candidates.empty()) throw std::invalid_argument("nearest_to_centers: no candidates");
  std::vector<bool> taken(candidates.size(), false);
  std::vector<PoolItem> out;
  for (const auto& center : centers) {
    if (out.size() == candidates.size()) break;
    std::size_t best = candidates.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (taken[i]) continue;
      const double d = squared_distance(candidates[i].features, center);
      if (d < best_d || (d == best_d && best < candidates.size() && candidates[i].id < candidates[best].id)) {
        best_d = d;
        best = i;
      }
    }
    taken[best] = true;
    out.push_back(candidates[best]);
  }
  return out;
}

AcquisitionBatch select_batch(std::vector<PoolItem> pool, const AcquisitionConfig& config, int cycle) {
  config.validate();
  AcquisitionBatch batch;
  batch.cycle = cycle;
  if (pool.empty()) return batch;

  std::vector<PoolItem> chosen;
  switch (config.strategy) {
    case AcquisitionStrategy::entropy_kmeans: {
      auto top = top_k_entropy(std::move(pool), config.top_k);
      const int b = std::min(config.batch_size, static_cast<int>(top.size()));
      std::vector<Point> features;
      features.reserve(top.size());
      for (const auto& it : top) features.push_back(it.features);
      const auto km = kmeans(features, b, config.kmeans_max_iters, config.seed);
      chosen = nearest_to_centers(top, km.centers);
      break;
    }
    case AcquisitionStrategy::top_entropy:
      chosen = top_k_entropy(std::move(pool), config.batch_size);
      break;
    case AcquisitionStrategy::random: {
      std::sort(pool.begin(), pool.end(), [](const PoolItem& a, const PoolItem& b) { return a.id < b.id; });
      Rng rng(config.seed);
      seeded_shuffle(std::span(pool), rng);
      pool.resize(std::min(pool.size(), static_cast<std::size_t>(config.batch_size)));
      chosen = std::move(pool);
      break;
    }
  }
  for (const auto& it : chosen) batch.items.push_back({it.id, it.probs.argmax(), it.entropy});
  return batch;
}

std::vector<PoolItem> build_pool(const Model& model, const Dataset& unlabeled, FeatureSource source) {
  const auto inference = infer(model, unlabeled.records(), unlabeled.root());
  nn::Matrix features;
  if (source == FeatureSource::model_embedding) {
    features = inference.embeddings;
  } else {
    ModelSpec thumb = model.spec();
    thumb.input_height = thumb.input_width = 8;
    features = prepare_inputs(thumb, unlabeled.records(), unlabeled.root());
  }
  std::vector<PoolItem> pool;
  pool.reserve(unlabeled.size());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const auto row = features.row(static_cast<Eigen::Index>(i));
    pool.push_back(PoolItem::make(unlabeled[i].id, Point(row.data(), row.data() + row.size()), inference.probs[i]));
  }
  return pool;
}

AcquisitionBatch acquire_batch(const Model& model, const Dataset& unlabeled, const AcquisitionConfig& config,
                               int cycle) {
  if (unlabeled.empty()) throw std::invalid_argument("acquire_batch: unlabeled pool is empty");
  config.validate();
  return select_batch(build_pool(model, unlabeled, config.feature_source), config, cycle);
}

} // namespace seedloop
