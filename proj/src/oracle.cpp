#include "seedloop/oracle.hpp"

#include <stdexcept>

namespace seedloop {

void OracleConfig::validate() const {
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw std::invalid_argument("oracle noise_rate must be in [0, 1)");
  if (base_ms < 0 || extra_ms < 0) throw std::invalid_argument("oracle latencies must be >= 0");
  if (num_classes < 2) throw std::invalid_argument("oracle needs at least 2 classes");
  for (const auto& [id, c] : ground_truth)
    if (c < 0 || c >= num_classes) throw std::invalid_argument("ground truth for '" + id + "' is out of range");
}

OracleConfig OracleConfig::from_dataset(const Dataset& dataset) {
  OracleConfig c;
  c.num_classes = static_cast<int>(dataset.labels().size());
  for (const auto& r : dataset)
    if (r.label) c.ground_truth.emplace(r.id, *r.label);
  return c;
}

SimulatedAnnotation simulated_annotate(const AcquisitionBatch& batch, const OracleConfig& oracle) {
  oracle.validate();
  SimulatedAnnotation out;
  out.labels.reserve(batch.items.size());
  for (const auto& item : batch.items) {
    const auto it = oracle.ground_truth.find(item.id);
    if (it == oracle.ground_truth.end()) throw std::invalid_argument("no ground truth for '" + item.id + "'");
    ClassIndex label = it->second;
    if (oracle.noise_rate > 0.0) {
      Rng rng(derive_seed(oracle.seed, {hash_string(item.id)}));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < oracle.noise_rate) {
        const auto k = static_cast<ClassIndex>(uniform_index(rng, static_cast<std::size_t>(oracle.num_classes - 1)));
        label = k < label ? k : k + 1;
      }
    }
    const std::int64_t ms = oracle.base_ms + (label != item.suggested_label ? oracle.extra_ms : 0);
    out.labels.push_back({item.id, label, ms});
    out.elapsed_ms += ms;
  }
  return out;
}

} // namespace seedloop
