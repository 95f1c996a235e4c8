// Built-in classifier architectures.

#include <algorithm>

#include "seedloop/classifier.hpp"

namespace seedloop {

namespace {

class SequentialBackend final : public ClassifierBackend {
public:
  SequentialBackend(nn::Sequential net, std::size_t embed_upto, std::size_t embed_dim)
      : net_(std::move(net)), embed_upto_(embed_upto), embed_dim_(embed_dim) {}

  std::unique_ptr<ClassifierBackend> clone() const override { return std::make_unique<SequentialBackend>(*this); }

  nn::Matrix logits(const nn::Matrix& input, nn::Matrix* embedding) const override {
    nn::Matrix h = net_.infer(centered(input), embed_upto_);
    nn::Matrix out = net_.infer_from(h, embed_upto_);
    if (embedding) *embedding = std::move(h);
    return out;
  }

  std::size_t embedding_dim() const override { return embed_dim_; }

  void begin_training(const TrainConfig& config) override {
    adam_ = nn::Adam(static_cast<float>(config.learning_rate));
    for (nn::Param* p : net_.params()) {
      p->m.setZero();
      p->v.setZero();
    }
  }

  TrainStepResult train_step(const nn::Matrix& input, std::span<const int> labels) override {
    net_.zero_grad();
    const nn::Matrix out = net_.forward(centered(input));
    nn::Matrix grad;
    TrainStepResult r;
    r.loss = nn::softmax_cross_entropy(out, labels, &grad);
    net_.backward(grad);
    const auto params = net_.params();
    adam_.step(params);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Eigen::Index best = 0;
      out.row(i).maxCoeff(&best);
      if (best == labels[static_cast<std::size_t>(i)]) ++r.correct;
    }
    return r;
  }

  std::vector<float> state() const override { return net_.state(); }
  void load_state(std::span<const float> flat) override { net_.load_state(flat); }

private:
  static nn::Matrix centered(const nn::Matrix& x) { return x.array() - 0.5f; }

  nn::Sequential net_;
  std::size_t embed_upto_;
  std::size_t embed_dim_;
  nn::Adam adam_;
};

std::unique_ptr<ClassifierBackend> make_small_cnn(const ModelSpec& spec) {
  if (spec.input_height % 4 != 0 || spec.input_width % 4 != 0)
    throw std::invalid_argument("small-cnn needs an input resolution divisible by 4");
  Rng rng(derive_seed(spec.init_seed, {0x636e6eULL}));
  const int h = spec.input_height, w = spec.input_width;
  constexpr int c1 = 8, c2 = 16, hidden = 64;
  nn::Sequential net;
  net.add<nn::Conv3x3>(3, h, w, c1, rng);
  net.add<nn::LeakyReLU>(0.0f);
  net.add<nn::MaxPool2>(c1, h, w);
  net.add<nn::Conv3x3>(c1, h / 2, w / 2, c2, rng);
  net.add<nn::LeakyReLU>(0.0f);
  net.add<nn::MaxPool2>(c2, h / 2, w / 2);
  net.add<nn::Dense>(c2 * (h / 4) * (w / 4), hidden, rng);
  net.add<nn::LeakyReLU>(0.0f);
  net.add<nn::Dense>(hidden, spec.num_classes, rng);
  return std::make_unique<SequentialBackend>(std::move(net), 8, hidden);
}

std::unique_ptr<ClassifierBackend> make_mlp(const ModelSpec& spec) {
  Rng rng(derive_seed(spec.init_seed, {0x6d6c70ULL}));
  constexpr int hidden = 128;
  nn::Sequential net;
  net.add<nn::Dense>(3 * spec.input_height * spec.input_width, hidden, rng);
  net.add<nn::LeakyReLU>(0.0f);
  net.add<nn::Dense>(hidden, spec.num_classes, rng);
  return std::make_unique<SequentialBackend>(std::move(net), 2, hidden);
}

} // namespace

BackendRegistry::BackendRegistry() {
  factories_["small-cnn"] = make_small_cnn;
  factories_["mlp"] = make_mlp;
}

} // namespace seedloop
