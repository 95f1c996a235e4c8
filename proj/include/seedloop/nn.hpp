#pragma once

// Minimal CPU neural-network toolkit: dense and 3x3 convolution layers with
// hand-written backward passes, Adam, and a sequential container. Batches are
// row-major matrices with one sample per row; image tensors are flattened CHW.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "seedloop/rng.hpp"

namespace seedloop::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct Param {
  Matrix value;
  Matrix grad;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment

  explicit Param(Matrix init);
  void zero_grad() { grad.setZero(); }
};

class Adam {
public:
  Adam(float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Param* const> params);
  void reset() { t_ = 0; }
  void set_learning_rate(float lr) { lr_ = lr; }

private:
  float lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

class Layer {
public:
  virtual ~Layer() = default;
  /// Training forward pass; caches what backward needs.
  virtual Matrix forward(const Matrix& x) = 0;
  /// Stateless forward pass, safe to call concurrently.
  virtual Matrix infer(const Matrix& x) const = 0;
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense final : public Layer {
public:
  Dense(int in, int out, Rng& rng);
  Matrix forward(const Matrix& x) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  const Param& weight() const { return w_; }

private:
  Param w_;  // (out, in)
  Param b_;  // (1, out)
  Matrix x_;
};

/// 3x3 convolution, stride 1, zero padding 1.
class Conv3x3 final : public Layer {
public:
  Conv3x3(int channels, int height, int width, int filters, Rng& rng);
  Matrix forward(const Matrix& x) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }

private:
  void im2col(const float* src, Matrix& cols) const;
  void col2im_add(const Matrix& cols, float* dst) const;

  int c_, h_, w_size_, f_;
  Param w_;  // (filters, channels * 9)
  Param b_;  // (1, filters)
  std::vector<Matrix> cols_;
};

/// 2x2 max pooling, stride 2, over CHW rows.
class MaxPool2 final : public Layer {
public:
  MaxPool2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {}
  Matrix forward(const Matrix& x) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }

private:
  Matrix pool(const Matrix& x, std::vector<std::int32_t>* argmax) const;
  int c_, h_, w_;
  std::vector<std::int32_t> argmax_;
  Eigen::Index in_cols_ = 0;
};

/// Nearest-neighbour 2x upsampling over CHW rows.
class Upsample2 final : public Layer {
public:
  Upsample2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {}
  Matrix forward(const Matrix& x) override { return infer(x); }
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample2>(*this); }

private:
  int c_, h_, w_;
};

class LeakyReLU final : public Layer {
public:
  explicit LeakyReLU(float slope = 0.0f) : slope_(slope) {}
  Matrix forward(const Matrix& x) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReLU>(*this); }

private:
  float slope_;
  Matrix x_;
};

class Sigmoid final : public Layer {
public:
  Matrix forward(const Matrix& x) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }

private:
  Matrix y_;
};

class Sequential {
public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix forward(const Matrix& x);
  /// Runs layers [0, upto) without caching; upto = size() runs the whole net.
  Matrix infer(const Matrix& x, std::size_t upto) const;
  Matrix infer(const Matrix& x) const { return infer(x, layers_.size()); }
  /// Runs layers [from, size()).
  Matrix infer_from(const Matrix& x, std::size_t from) const;
  Matrix backward(const Matrix& grad_out);

  std::vector<Param*> params();
  void zero_grad();
  std::size_t size() const { return layers_.size(); }

  std::vector<float> state() const;
  void load_state(std::span<const float> flat);
  std::size_t parameter_count() const;

private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Row-wise softmax.
Matrix softmax(const Matrix& logits);

/// Mean softmax cross-entropy; writes d(loss)/d(logits) into grad when non-null.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad);

/// Mean of softplus(-sign * logit) over a column of logits (sign = +1 for the
/// "real" target, -1 for "fake"); gradient w.r.t. the logits into grad.
double logistic_loss(const Matrix& logits, float sign, Matrix* grad);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

} // namespace seedloop::nn
