#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "seedloop/dataset.hpp"
#include "seedloop/nn.hpp"

namespace seedloop {

struct GanConfig {
  int height = 64;
  int width = 64;
  double learning_rate = 2e-4;
  int batch_size = 16;
  int dim_z = 128;
  int epochs = 250;
  int num_classes = 4;
  std::uint64_t seed = 0;
  int hidden_units = 256;  ///< discriminator feature width
  int channels = 32;       ///< base convolution width
  int embed_dim = 32;      ///< generator label-embedding width
  double adam_beta1 = 0.5;
  /// Std-dev of Gaussian noise added to discriminator inputs, decayed to 0.
  double instance_noise = 0.1;
  /// The returned generator holds an exponential moving average of its
  /// weights over training steps (0 = last iterate). Step t uses
  /// min(ema_decay, (1 + t) / (10 + t)).
  double ema_decay = 0.999;
  /// Stop after this many optimizer steps in total (0 = run all epochs).
  std::int64_t max_steps = 0;

  void validate() const;
  int image_size() const { return 3 * height * width; }
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

struct LatentVector {
  std::vector<float> z;
};

/// Standard-normal latent draws from a seeded stream.
LatentVector random_latent(int dim_z, Rng& rng);

/// Label-embedding generator: [z, embed(label)] -> dense 8x8 feature map ->
/// (upsample, conv) stages -> image in [0,1].
class Generator {
public:
  Generator(const GanConfig& config, Rng& rng);

  /// Rows of flattened CHW images in [0,1]; deterministic given weights, z and labels.
  nn::Matrix generate(const nn::Matrix& z, std::span<const int> labels) const;
  Image generate_image(const LatentVector& z, ClassIndex label) const;

  nn::Matrix forward(const nn::Matrix& z, std::span<const int> labels);
  void backward(const nn::Matrix& grad_images);
  std::vector<nn::Param*> params();
  void zero_grad();

  std::vector<float> state() const;
  void load_state(std::span<const float> flat);

  const GanConfig& config() const { return config_; }

private:
  nn::Matrix join(const nn::Matrix& z, std::span<const int> labels) const;

  GanConfig config_;
  nn::Param embedding_;  // (num_classes, embed_dim)
  nn::Sequential body_;
  std::vector<int> labels_;
};

/// Projection discriminator: score = head(phi(x)) + <embed(label), phi(x)>,
/// phi = (conv, pool) stages down to 8x8 then a dense layer.
class Discriminator {
public:
  Discriminator(const GanConfig& config, Rng& rng);

  nn::Matrix score(const nn::Matrix& images, std::span<const int> labels) const;
  nn::Matrix forward(const nn::Matrix& images, std::span<const int> labels);
  /// Returns d(score)/d(images) and accumulates parameter gradients.
  nn::Matrix backward(const nn::Matrix& grad_scores);
  std::vector<nn::Param*> params();
  void zero_grad();

  std::vector<float> state() const;
  void load_state(std::span<const float> flat);

private:
  GanConfig config_;
  nn::Sequential features_;
  nn::Sequential head_;
  nn::Param class_embed_;  // (num_classes, hidden_units)
  nn::Matrix phi_;
  std::vector<int> labels_;
};

struct GanStep {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct ConditionalGan {
  GanConfig config;
  Generator generator;
  Discriminator discriminator;
  std::vector<GanStep> loss_history;
  bool deterministic = true;  ///< training is bit-reproducible for a fixed seed
};

ConditionalGan init_cgan(const GanConfig& config);

/// Cycles through per-class shuffled orders; every batch holds
/// batch_size / num_classes records of each class. Minority classes wrap
/// around (and are reshuffled) within an epoch.
class ClassBalancedSampler {
public:
  ClassBalancedSampler(const Dataset& train_set, int batch_size, std::uint64_t seed);

  /// Indices into the dataset.
  std::vector<std::size_t> next_batch();
  /// ceil(|train_set| / batch_size).
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }

private:
  struct ClassQueue {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::vector<ClassQueue> queues_;
  std::size_t per_class_ = 0;
  std::size_t batches_per_epoch_ = 0;
  Rng rng_;
};

/// Alternating D/G updates (non-saturating loss) over class-balanced batches
/// for config.epochs epochs.
ConditionalGan train_cgan(const Dataset& train_set, const GanConfig& config);

/// n generated records with fresh ids, label `label`, pixels held in memory.
std::vector<ImageRecord> sample(const Generator& g, ClassIndex label, int n, std::uint64_t seed);

/// g((1 - t) z1 + t z2, label) for t = i / (steps - 1).
std::vector<Image> interpolate(const Generator& g, const LatentVector& z1, const LatentVector& z2, ClassIndex label,
                               int steps);

/// Adds plan.to_generate[c] generated samples of each class c.
Dataset augment_dataset(const Dataset& train_set, const Generator& g, const BalancingPlan& plan, std::uint64_t seed);

void save_cgan(const ConditionalGan& gan, const std::filesystem::path& path);
ConditionalGan load_cgan(const std::filesystem::path& path);

} // namespace seedloop
