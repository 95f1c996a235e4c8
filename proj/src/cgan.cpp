#include "seedloop/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seedloop/archive.hpp"

namespace seedloop {

namespace {

constexpr std::string_view kGanMagic = "SLCGAN01";

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// number of 2x stages between the 8-pixel base grid and the image
int stage_count(const GanConfig& c) {
  int n = 0;
  while ((std::min(c.height, c.width) >> n) > 8) ++n;
  return n;
}

nn::Matrix random_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

nn::Matrix small_normal(Eigen::Index rows, Eigen::Index cols, float stddev, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void append(std::vector<float>& out, const nn::Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); }

std::size_t read_into(nn::Matrix& m, std::span<const float> flat, std::size_t off) {
  if (off + static_cast<std::size_t>(m.size()) > flat.size()) throw std::invalid_argument("GAN state too short");
  std::copy_n(flat.data() + off, static_cast<std::size_t>(m.size()), m.data());
  return off + static_cast<std::size_t>(m.size());
}

} // namespace

// ---------------------------------------------------------------------------
// Config

void GanConfig::validate() const {
  if (!power_of_two(height) || !power_of_two(width) || height < 32 || width < 32)
    throw std::invalid_argument("GAN resolution must be powers of two >= 32");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("GAN learning rate must be positive");
  if (num_classes < 2) throw std::invalid_argument("GAN needs at least 2 classes");
  if (batch_size < 1 || batch_size % num_classes != 0)
    throw std::invalid_argument("GAN batch size must be a positive multiple of the class count");
  if (dim_z < 1 || hidden_units < 1 || embed_dim < 1 || channels < 2) throw std::invalid_argument("GAN layer sizes must be positive");
  if (epochs < 0) throw std::invalid_argument("GAN epochs must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("GAN max_steps must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("GAN ema_decay must be in [0, 1)");
  if (!(instance_noise >= 0.0)) throw std::invalid_argument("GAN instance noise must be >= 0");
}

nlohmann::json GanConfig::to_json() const {
  return {{"height", height},       {"width", width},         {"learning_rate", learning_rate},
          {"batch_size", batch_size}, {"dim_z", dim_z},         {"epochs", epochs},
          {"num_classes", num_classes}, {"seed", seed},         {"hidden_units", hidden_units},
          {"embed_dim", embed_dim},   {"adam_beta1", adam_beta1}, {"max_steps", max_steps},
          {"channels", channels}, {"instance_noise", instance_noise},
          {"ema_decay", ema_decay}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dim_z = j.at("dim_z").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hidden_units = j.at("hidden_units").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.adam_beta1 = j.value("adam_beta1", 0.5);
  c.max_steps = j.value("max_steps", std::int64_t{0});
  c.channels = j.value("channels", 32);
  c.instance_noise = j.value("instance_noise", 0.1);
  c.ema_decay = j.value("ema_decay", 0.999);
  return c;
}

LatentVector random_latent(int dim_z, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  LatentVector v;
  v.z.resize(static_cast<std::size_t>(dim_z));
  for (auto& x : v.z) x = dist(rng);
  return v;
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(const GanConfig& config, Rng& rng)
    : config_(config), embedding_(small_normal(config.num_classes, config.embed_dim, 1.0f, rng)) {
  const int stages = stage_count(config);
  int h = config.height >> stages, w = config.width >> stages;
  int c = 2 * config.channels;
  body_.add<nn::Dense>(config.dim_z + config.embed_dim, c * h * w, rng);
  body_.add<nn::LeakyReLU>(0.2f);
  for (int s = 0; s < stages; ++s) {
    body_.add<nn::Upsample2>(c, h, w);
    h *= 2;
    w *= 2;
    const int next = std::max(8, c / 2);
    body_.add<nn::Conv3x3>(c, h, w, next, rng);
    body_.add<nn::LeakyReLU>(0.2f);
    c = next;
  }
  body_.add<nn::Conv3x3>(c, h, w, 3, rng);
  body_.add<nn::Sigmoid>();
}

nn::Matrix Generator::join(const nn::Matrix& z, std::span<const int> labels) const {
  if (z.cols() != config_.dim_z) throw std::invalid_argument("latent dimension mismatch");
  if (static_cast<std::size_t>(z.rows()) != labels.size()) throw std::invalid_argument("latent/label count mismatch");
  nn::Matrix in(z.rows(), config_.dim_z + config_.embed_dim);
  in.leftCols(config_.dim_z) = z;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= config_.num_classes) throw std::invalid_argument("label outside the GAN classes");
    in.row(static_cast<Eigen::Index>(i)).rightCols(config_.embed_dim) = embedding_.value.row(labels[i]);
  }
  return in;
}

nn::Matrix Generator::generate(const nn::Matrix& z, std::span<const int> labels) const {
  return body_.infer(join(z, labels));
}

Image Generator::generate_image(const LatentVector& z, ClassIndex label) const {
  nn::Matrix zm(1, config_.dim_z);
  if (z.z.size() != static_cast<std::size_t>(config_.dim_z)) throw std::invalid_argument("latent dimension mismatch");
  std::copy(z.z.begin(), z.z.end(), zm.data());
  const int labels[1] = {label};
  const nn::Matrix out = generate(zm, labels);
  return from_chw(std::span<const float>(out.data(), static_cast<std::size_t>(out.size())), config_.width,
                  config_.height);
}

nn::Matrix Generator::forward(const nn::Matrix& z, std::span<const int> labels) {
  labels_.assign(labels.begin(), labels.end());
  return body_.forward(join(z, labels));
}

void Generator::backward(const nn::Matrix& grad_images) {
  const nn::Matrix g = body_.backward(grad_images);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    embedding_.grad.row(labels_[i]) += g.row(static_cast<Eigen::Index>(i)).rightCols(config_.embed_dim);
}

std::vector<nn::Param*> Generator::params() {
  auto p = body_.params();
  p.push_back(&embedding_);
  return p;
}

void Generator::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

std::vector<float> Generator::state() const {
  std::vector<float> out = body_.state();
  append(out, embedding_.value);
  return out;
}

void Generator::load_state(std::span<const float> flat) {
  const std::size_t body = body_.parameter_count();
  if (flat.size() != body + static_cast<std::size_t>(embedding_.value.size()))
    throw std::invalid_argument("generator state size mismatch");
  body_.load_state(flat.first(body));
  read_into(embedding_.value, flat, body);
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(const GanConfig& config, Rng& rng)
    : config_(config), class_embed_(small_normal(config.num_classes, config.hidden_units, 0.05f, rng)) {
  const int stages = stage_count(config);
  int h = config.height, w = config.width;
  int c = 3;
  int next = std::max(4, config.channels / 2);
  for (int s = 0; s < stages; ++s) {
    features_.add<nn::Conv3x3>(c, h, w, next, rng);
    features_.add<nn::LeakyReLU>(0.2f);
    features_.add<nn::MaxPool2>(next, h, w);
    h /= 2;
    w /= 2;
    c = next;
    next *= 2;
  }
  features_.add<nn::Dense>(c * h * w, config.hidden_units, rng);
  features_.add<nn::LeakyReLU>(0.2f);
  head_.add<nn::Dense>(config.hidden_units, 1, rng);
}

nn::Matrix Discriminator::score(const nn::Matrix& images, std::span<const int> labels) const {
  const nn::Matrix phi = features_.infer(images.array() * 2.0f - 1.0f);
  nn::Matrix s = head_.infer(phi);
  for (std::size_t i = 0; i < labels.size(); ++i)
    s(static_cast<Eigen::Index>(i), 0) += phi.row(static_cast<Eigen::Index>(i)).dot(class_embed_.value.row(labels[i]));
  return s;
}

nn::Matrix Discriminator::forward(const nn::Matrix& images, std::span<const int> labels) {
  if (static_cast<std::size_t>(images.rows()) != labels.size()) throw std::invalid_argument("image/label count mismatch");
  labels_.assign(labels.begin(), labels.end());
  phi_ = features_.forward(images.array() * 2.0f - 1.0f);
  nn::Matrix s = head_.forward(phi_);
  for (std::size_t i = 0; i < labels.size(); ++i)
    s(static_cast<Eigen::Index>(i), 0) += phi_.row(static_cast<Eigen::Index>(i)).dot(class_embed_.value.row(labels[i]));
  return s;
}

nn::Matrix Discriminator::backward(const nn::Matrix& grad_scores) {
  nn::Matrix dphi = head_.backward(grad_scores);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const float g = grad_scores(r, 0);
    dphi.row(r) += g * class_embed_.value.row(labels_[i]);
    class_embed_.grad.row(labels_[i]) += g * phi_.row(r);
  }
  return features_.backward(dphi) * 2.0f;
}

std::vector<nn::Param*> Discriminator::params() {
  auto p = features_.params();
  for (auto* q : head_.params()) p.push_back(q);
  p.push_back(&class_embed_);
  return p;
}

void Discriminator::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

std::vector<float> Discriminator::state() const {
  std::vector<float> out = features_.state();
  const auto head = head_.state();
  out.insert(out.end(), head.begin(), head.end());
  append(out, class_embed_.value);
  return out;
}

void Discriminator::load_state(std::span<const float> flat) {
  const std::size_t nf = features_.parameter_count(), nh = head_.parameter_count();
  if (flat.size() != nf + nh + static_cast<std::size_t>(class_embed_.value.size()))
    throw std::invalid_argument("discriminator state size mismatch");
  features_.load_state(flat.first(nf));
  head_.load_state(flat.subspan(nf, nh));
  read_into(class_embed_.value, flat, nf + nh);
}

// ---------------------------------------------------------------------------
// Sampling of real batches

ClassBalancedSampler::ClassBalancedSampler(const Dataset& train_set, int batch_size, std::uint64_t seed)
    : rng_(seed) {
  const auto k = train_set.labels().size();
  if (batch_size < 1 || batch_size % static_cast<int>(k) != 0)
    throw std::invalid_argument("batch size must be a positive multiple of the class count");
  queues_.resize(k);
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto& r = train_set[i];
    if (!r.label) throw DatasetError("unlabeled record '" + r.id + "' in GAN training data");
    queues_[static_cast<std::size_t>(*r.label)].order.push_back(i);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (queues_[c].order.empty())
      throw DatasetError("class '" + train_set.labels().name(static_cast<ClassIndex>(c)) + "' has no records");
    seeded_shuffle(std::span(queues_[c].order), rng_);
  }
  per_class_ = static_cast<std::size_t>(batch_size) / k;
  batches_per_epoch_ = (train_set.size() + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

std::vector<std::size_t> ClassBalancedSampler::next_batch() {
  std::vector<std::size_t> batch;
  batch.reserve(per_class_ * queues_.size());
  for (auto& q : queues_)
    for (std::size_t j = 0; j < per_class_; ++j) {
      if (q.cursor == q.order.size()) {
        seeded_shuffle(std::span(q.order), rng_);
        q.cursor = 0;
      }
      batch.push_back(q.order[q.cursor++]);
    }
  return batch;
}

// ---------------------------------------------------------------------------
// Training

ConditionalGan init_cgan(const GanConfig& config) {
  config.validate();
  Rng g_rng(derive_seed(config.seed, {0x67ULL}));
  Rng d_rng(derive_seed(config.seed, {0x64ULL}));
  return ConditionalGan{config, Generator(config, g_rng), Discriminator(config, d_rng), {}, true};
}

ConditionalGan train_cgan(const Dataset& train_set, const GanConfig& config) {
  ConditionalGan gan = init_cgan(config);
  if (static_cast<int>(train_set.labels().size()) != config.num_classes)
    throw std::invalid_argument("GAN class count does not match the dataset's label set");
  for (const auto& r : train_set)
    if (!r.label) throw DatasetError("unlabeled record '" + r.id + "' in GAN training data");
  if (config.epochs == 0) return gan;
  if (train_set.empty()) throw std::invalid_argument("empty GAN training set");

  nn::Matrix real_all(static_cast<Eigen::Index>(train_set.size()), config.image_size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const Image sized = resize(*resolve_image(train_set, train_set[i]), config.width, config.height);
    to_chw(sized, std::span<float>(real_all.row(static_cast<Eigen::Index>(i)).data(),
                                   static_cast<std::size_t>(config.image_size())));
  }
  std::vector<int> labels_all;
  for (const auto& r : train_set) labels_all.push_back(*r.label);

  ClassBalancedSampler sampler(train_set, config.batch_size, derive_seed(config.seed, {0x73ULL}));
  Rng z_rng(derive_seed(config.seed, {0x7aULL}));
  const auto lr = static_cast<float>(config.learning_rate);
  const auto b1 = static_cast<float>(config.adam_beta1);
  nn::Adam adam_g(lr, b1, 0.999f), adam_d(lr, b1, 0.999f);
  auto g_params = gan.generator.params();
  auto d_params = gan.discriminator.params();

  Rng noise_rng(derive_seed(config.seed, {0x6eULL}));
  const std::int64_t total_steps =
      config.max_steps > 0 ? config.max_steps
                           : static_cast<std::int64_t>(config.epochs) * static_cast<std::int64_t>(sampler.batches_per_epoch());
  std::vector<float> ema;
  const auto decay = static_cast<float>(config.ema_decay);
  if (decay > 0.0f) ema = gan.generator.state();
  auto finish = [&]() -> ConditionalGan {
    if (!ema.empty()) gan.generator.load_state(ema);
    return std::move(gan);
  };
  std::vector<int> labels;
  std::int64_t steps = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      if (config.max_steps > 0 && steps >= config.max_steps) return finish();
      const auto idx = sampler.next_batch();
      labels.clear();
      for (auto i : idx) labels.push_back(labels_all[i]);
      const auto n = static_cast<Eigen::Index>(idx.size());
      const nn::Matrix real = nn::gather_rows(real_all, idx);

      // instance noise, annealed linearly to zero
      const float sigma = static_cast<float>(config.instance_noise *
                                             (1.0 - static_cast<double>(steps) / static_cast<double>(total_steps)));
      auto noisy = [&](const nn::Matrix& x) -> nn::Matrix {
        if (sigma <= 0.0f) return x;
        return x + sigma * random_normal(x.rows(), x.cols(), noise_rng);
      };

      GanStep step;
      // Discriminator phase.
      const nn::Matrix fake = gan.generator.generate(random_normal(n, config.dim_z, z_rng), labels);
      gan.discriminator.zero_grad();
      nn::Matrix grad;
      step.d_loss = nn::logistic_loss(gan.discriminator.forward(noisy(real), labels), +1.0f, &grad);
      gan.discriminator.backward(grad);
      step.d_loss += nn::logistic_loss(gan.discriminator.forward(noisy(fake), labels), -1.0f, &grad);
      gan.discriminator.backward(grad);
      adam_d.step(d_params);

      // Generator phase (non-saturating loss).
      gan.generator.zero_grad();
      const nn::Matrix gen = gan.generator.forward(random_normal(n, config.dim_z, z_rng), labels);
      step.g_loss = nn::logistic_loss(gan.discriminator.forward(noisy(gen), labels), +1.0f, &grad);
      gan.generator.backward(gan.discriminator.backward(grad));
      adam_g.step(g_params);
      if (!ema.empty()) {
        const auto cur = gan.generator.state();
        // warm-up: early steps average over a short window
        const float d = std::min(decay, static_cast<float>(steps + 1) / static_cast<float>(steps + 10));
        for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = d * ema[i] + (1.0f - d) * cur[i];
      }

      gan.loss_history.push_back(step);
      ++steps;
    }
  }
  return finish();
}

// ---------------------------------------------------------------------------
// Sampling, interpolation, augmentation

std::vector<ImageRecord> sample(const Generator& g, ClassIndex label, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample count must be >= 0");
  std::vector<ImageRecord> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const auto z = random_latent(g.config().dim_z, rng);
    ImageRecord r;
    char buf[64];
    std::snprintf(buf, sizeof buf, "gen-c%d-s%llu-%06d", label, static_cast<unsigned long long>(seed), i);
    r.id = buf;
    r.source = Source::generated;
    r.label = label;
    r.pixels = std::make_shared<const Image>(g.generate_image(z, label));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Image> interpolate(const Generator& g, const LatentVector& z1, const LatentVector& z2, ClassIndex label,
                               int steps) {
  if (steps < 2) throw std::invalid_argument("interpolation needs at least 2 steps");
  const auto dim = static_cast<std::size_t>(g.config().dim_z);
  if (z1.z.size() != dim || z2.z.size() != dim) throw std::invalid_argument("latent dimension mismatch");
  std::vector<Image> frames;
  for (int i = 0; i < steps; ++i) {
    const float t = static_cast<float>(i) / static_cast<float>(steps - 1);
    LatentVector z;
    z.z.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) z.z[d] = (1.0f - t) * z1.z[d] + t * z2.z[d];
    frames.push_back(g.generate_image(z, label));
  }
  return frames;
}

Dataset augment_dataset(const Dataset& train_set, const Generator& g, const BalancingPlan& plan, std::uint64_t seed) {
  const auto stats = class_stats(train_set);
  if (plan.to_generate.size() != stats.counts.size())
    throw std::invalid_argument("balancing plan class count does not match the dataset");
  if (plan.total_to_generate() == 0) return train_set;
  for (std::size_t c = 0; c < stats.counts.size(); ++c)
    if (plan.to_generate[c] < 0 || stats.counts[c] + plan.to_generate[c] != plan.target_per_class)
      throw std::invalid_argument("balancing plan is inconsistent with the training set's class counts");
  std::vector<ImageRecord> records = train_set.records();
  for (std::size_t c = 0; c < plan.to_generate.size(); ++c) {
    auto generated = sample(g, static_cast<ClassIndex>(c), static_cast<int>(plan.to_generate[c]),
                            derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    for (auto& r : generated) records.push_back(std::move(r));
  }
  return train_set.with_records(std::move(records), train_set.name() + "-augmented");
}

void save_cgan(const ConditionalGan& gan, const std::filesystem::path& path) {
  Archive a;
  const auto gs = gan.generator.state();
  const auto ds = gan.discriminator.state();
  a.header = {{"kind", "cgan"},
              {"config", gan.config.to_json()},
              {"generator_params", gs.size()},
              {"discriminator_params", ds.size()},
              {"steps_trained", gan.loss_history.size()},
              {"deterministic", gan.deterministic}};
  a.weights = gs;
  a.weights.insert(a.weights.end(), ds.begin(), ds.end());
  write_archive(path, kGanMagic, a);
}

ConditionalGan load_cgan(const std::filesystem::path& path) {
  const Archive a = read_archive(path, kGanMagic);
  ConditionalGan gan = init_cgan(GanConfig::from_json(a.header.at("config")));
  const auto ng = a.header.at("generator_params").get<std::size_t>();
  const std::span<const float> w(a.weights);
  if (ng > w.size()) throw std::runtime_error("GAN archive is truncated");
  gan.generator.load_state(w.first(ng));
  gan.discriminator.load_state(w.subspan(ng));
  gan.deterministic = a.header.value("deterministic", true);
  return gan;
}

} // namespace seedloop
