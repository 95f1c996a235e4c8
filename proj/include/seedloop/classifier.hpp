#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seedloop/dataset.hpp"
#include "seedloop/nn.hpp"

namespace seedloop {

/// Class probabilities in canonical LabelSet order.
class ProbVector {
public:
  ProbVector() = default;
  /// Throws std::invalid_argument unless entries are in [0,1] and sum to 1 (1e-6).
  explicit ProbVector(std::vector<double> probs);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t c) const { return p_[c]; }
  const std::vector<double>& values() const { return p_; }
  /// Lowest class index among the maxima.
  ClassIndex argmax() const;

  bool operator==(const ProbVector&) const = default;

private:
  std::vector<double> p_;
};

enum class FusionRule { mean, max, product };

/// Combines the top- and bottom-view predictions of one seed. `mean` is the default.
ProbVector fuse_pair(const ProbVector& top, const ProbVector& bottom, FusionRule rule = FusionRule::mean);

struct ModelSpec {
  std::string backend_id = "small-cnn";
  int input_height = 32;
  int input_width = 32;
  int num_classes = 4;
  std::uint64_t init_seed = 0;
  bool pretrained = false;  ///< request transfer-learning weights; the backend must support it

  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

enum class EarlyStopMetric { val_accuracy, val_loss };

struct TrainConfig {
  int max_epochs = 30;
  int early_stop_patience = 5;
  EarlyStopMetric early_stop_metric = EarlyStopMetric::val_accuracy;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainStepResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

/// Architecture behind a Model. Inputs are rows of flattened CHW floats in
/// [0,1] at the spec's resolution.
class ClassifierBackend {
public:
  virtual ~ClassifierBackend() = default;
  virtual std::unique_ptr<ClassifierBackend> clone() const = 0;

  /// Class logits; fills `embedding` with the penultimate activations when non-null.
  virtual nn::Matrix logits(const nn::Matrix& input, nn::Matrix* embedding) const = 0;
  virtual std::size_t embedding_dim() const = 0;

  /// Called once before the first step of a training run.
  virtual void begin_training(const TrainConfig& config) = 0;
  virtual TrainStepResult train_step(const nn::Matrix& input, std::span<const int> labels) = 0;
  virtual void end_epoch() {}

  virtual std::vector<float> state() const = 0;
  virtual void load_state(std::span<const float> flat) = 0;

  virtual bool supports_pretrained() const { return false; }
  /// False when training is not bit-reproducible given the seeds.
  virtual bool deterministic() const { return true; }
};

using BackendFactory = std::function<std::unique_ptr<ClassifierBackend>(const ModelSpec&)>;

class UnknownBackendError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Process-wide registry. "small-cnn" and "mlp" are registered by default.
class BackendRegistry {
public:
  static BackendRegistry& instance();
  void add(const std::string& id, BackendFactory factory);
  std::unique_ptr<ClassifierBackend> create(const ModelSpec& spec) const;
  std::vector<std::string> ids() const;

private:
  BackendRegistry();
  std::map<std::string, BackendFactory> factories_;
};

class Model {
public:
  Model(ModelSpec spec, std::unique_ptr<ClassifierBackend> backend);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  ClassifierBackend& backend() { return *backend_; }
  const ClassifierBackend& backend() const { return *backend_; }

private:
  ModelSpec spec_;
  std::unique_ptr<ClassifierBackend> backend_;
};

/// Fresh model; identical specs give identical predictions.
Model init_model(const ModelSpec& spec);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_acc = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Model model;  ///< weights of the best epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Minibatch training with early stopping on the configured validation metric.
TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config);

/// Flattened CHW rows for `records`, resized to the model's input resolution.
nn::Matrix prepare_inputs(const ModelSpec& spec, std::span<const ImageRecord> records,
                          const std::filesystem::path& root = {});

struct Inference {
  std::vector<ProbVector> probs;
  nn::Matrix embeddings;  ///< one row per record
};

Inference infer(const Model& model, const nn::Matrix& inputs);
Inference infer(const Model& model, std::span<const ImageRecord> records, const std::filesystem::path& root = {});

std::vector<ProbVector> predict_proba(const Model& model, std::span<const ImageRecord> records,
                                      const std::filesystem::path& root = {});
std::vector<ProbVector> predict_proba(const Model& model, const Dataset& dataset);

struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  ///< rows = truth, columns = prediction
  std::vector<std::optional<double>> classwise_accuracy;  ///< nullopt for classes absent from the truth
  double physical_purity_accuracy = 0.0;

  nlohmann::json to_json(const LabelSet& labels) const;
};

EvalReport evaluate_predictions(const LabelSet& labels, std::span<const ClassIndex> truth,
                                std::span<const ClassIndex> predicted);
EvalReport evaluate(const Model& model, const Dataset& dataset);
/// Evaluates one fused prediction per pair_id group; unpaired records count alone.
EvalReport evaluate_fused(const Model& model, const Dataset& dataset, FusionRule rule = FusionRule::mean);

} // namespace seedloop
