#include "seedloop/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace seedloop::nn {

namespace {

Matrix he_normal(int rows, int cols, int fan_in, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

using ConstRowMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<Matrix>;

} // namespace

Param::Param(Matrix init) : value(std::move(init)) {
  grad = Matrix::Zero(value.rows(), value.cols());
  m = Matrix::Zero(value.rows(), value.cols());
  v = Matrix::Zero(value.rows(), value.cols());
}

void Adam::step(std::span<Param* const> params) {
  ++t_;
  const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  const float step = lr_ * std::sqrt(c2) / c1;
  for (Param* p : params) {
    p->m = beta1_ * p->m + (1.0f - beta1_) * p->grad;
    p->v = beta2_ * p->v + (1.0f - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= step * p->m.array() / (p->v.array().sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------

Dense::Dense(int in, int out, Rng& rng) : w_(he_normal(out, in, in, rng)), b_(Matrix::Zero(1, out)) {}

// per-row products: output is independent of batch position
Matrix Dense::infer(const Matrix& x) const {
  Matrix y(x.rows(), w_.value.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y.row(i).noalias() = (w_.value * x.row(i).transpose()).transpose() + b_.value.row(0);
  return y;
}

Matrix Dense::forward(const Matrix& x) {
  x_ = x;
  Matrix y = x * w_.value.transpose();
  y.rowwise() += b_.value.row(0);
  return y;
}

Matrix Dense::backward(const Matrix& grad_out) {
  w_.grad.noalias() += grad_out.transpose() * x_;
  b_.grad.row(0) += grad_out.colwise().sum();
  return grad_out * w_.value;
}

// ---------------------------------------------------------------------------

Conv3x3::Conv3x3(int channels, int height, int width, int filters, Rng& rng)
    : c_(channels), h_(height), w_size_(width), f_(filters),
      w_(he_normal(filters, channels * 9, channels * 9, rng)), b_(Matrix::Zero(1, filters)) {}

void Conv3x3::im2col(const float* src, Matrix& cols) const {
  const int hw = h_ * w_size_;
  cols.resize(c_ * 9, hw);
  for (int c = 0; c < c_; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        float* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h_; ++y) {
          const int sy = y + ky - 1;
          for (int x = 0; x < w_size_; ++x) {
            const int sx = x + kx - 1;
            row[y * w_size_ + x] = (sy < 0 || sy >= h_ || sx < 0 || sx >= w_size_)
                                       ? 0.0f
                                       : src[(c * h_ + sy) * w_size_ + sx];
          }
        }
      }
}

void Conv3x3::col2im_add(const Matrix& cols, float* dst) const {
  for (int c = 0; c < c_; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h_; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h_) continue;
          for (int x = 0; x < w_size_; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w_size_) continue;
            dst[(c * h_ + sy) * w_size_ + sx] += row[y * w_size_ + x];
          }
        }
      }
}

Matrix Conv3x3::infer(const Matrix& x) const {
  const int hw = h_ * w_size_;
  if (x.cols() != c_ * hw) throw std::invalid_argument("Conv3x3: input width mismatch");
  Matrix out(x.rows(), f_ * hw);
  Matrix cols;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    im2col(x.row(n).data(), cols);
    RowMap o(out.row(n).data(), f_, hw);
    o.noalias() = w_.value * cols;
    o.colwise() += b_.value.row(0).transpose();
  }
  return out;
}

Matrix Conv3x3::forward(const Matrix& x) {
  const int hw = h_ * w_size_;
  if (x.cols() != c_ * hw) throw std::invalid_argument("Conv3x3: input width mismatch");
  cols_.resize(static_cast<std::size_t>(x.rows()));
  Matrix out(x.rows(), f_ * hw);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    auto& cols = cols_[static_cast<std::size_t>(n)];
    im2col(x.row(n).data(), cols);
    RowMap o(out.row(n).data(), f_, hw);
    o.noalias() = w_.value * cols;
    o.colwise() += b_.value.row(0).transpose();
  }
  return out;
}

Matrix Conv3x3::backward(const Matrix& grad_out) {
  const int hw = h_ * w_size_;
  Matrix grad_in = Matrix::Zero(grad_out.rows(), c_ * hw);
  Matrix dcols;
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n) {
    ConstRowMap g(grad_out.row(n).data(), f_, hw);
    const auto& cols = cols_[static_cast<std::size_t>(n)];
    w_.grad.noalias() += g * cols.transpose();
    b_.grad.row(0) += g.rowwise().sum().transpose();
    dcols.noalias() = w_.value.transpose() * g;
    col2im_add(dcols, grad_in.row(n).data());
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Matrix MaxPool2::pool(const Matrix& x, std::vector<std::int32_t>* argmax) const {
  const int oh = h_ / 2, ow = w_ / 2;
  const int out_cols = c_ * oh * ow;
  Matrix out(x.rows(), out_cols);
  if (argmax) argmax->resize(static_cast<std::size_t>(x.rows()) * out_cols);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const float* src = x.row(n).data();
    float* dst = out.row(n).data();
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          int best = (c * h_ + 2 * y) * w_ + 2 * xx;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (c * h_ + 2 * y + dy) * w_ + 2 * xx + dx;
              if (src[idx] > src[best]) best = idx;
            }
          const int o = (c * oh + y) * ow + xx;
          dst[o] = src[best];
          if (argmax) (*argmax)[static_cast<std::size_t>(n) * out_cols + o] = best;
        }
  }
  return out;
}

Matrix MaxPool2::infer(const Matrix& x) const { return pool(x, nullptr); }

Matrix MaxPool2::forward(const Matrix& x) {
  in_cols_ = x.cols();
  return pool(x, &argmax_);
}

Matrix MaxPool2::backward(const Matrix& grad_out) {
  Matrix grad_in = Matrix::Zero(grad_out.rows(), in_cols_);
  const auto out_cols = grad_out.cols();
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n)
    for (Eigen::Index o = 0; o < out_cols; ++o)
      grad_in(n, argmax_[static_cast<std::size_t>(n * out_cols + o)]) += grad_out(n, o);
  return grad_in;
}

// ---------------------------------------------------------------------------

Matrix Upsample2::infer(const Matrix& x) const {
  const int oh = 2 * h_, ow = 2 * w_;
  Matrix out(x.rows(), c_ * oh * ow);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const float* src = x.row(n).data();
    float* dst = out.row(n).data();
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) dst[(c * oh + y) * ow + xx] = src[(c * h_ + y / 2) * w_ + xx / 2];
  }
  return out;
}

Matrix Upsample2::backward(const Matrix& grad_out) {
  const int oh = 2 * h_, ow = 2 * w_;
  Matrix grad_in = Matrix::Zero(grad_out.rows(), c_ * h_ * w_);
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n) {
    const float* src = grad_out.row(n).data();
    float* dst = grad_in.row(n).data();
    for (int c = 0; c < c_; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) dst[(c * h_ + y / 2) * w_ + xx / 2] += src[(c * oh + y) * ow + xx];
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

Matrix LeakyReLU::infer(const Matrix& x) const {
  return x.unaryExpr([s = slope_](float v) { return v > 0.0f ? v : s * v; });
}

Matrix LeakyReLU::forward(const Matrix& x) {
  x_ = x;
  return infer(x);
}

Matrix LeakyReLU::backward(const Matrix& grad_out) {
  return grad_out.binaryExpr(x_, [s = slope_](float g, float v) { return v > 0.0f ? g : s * g; });
}

Matrix Sigmoid::infer(const Matrix& x) const {
  return x.unaryExpr([](float v) { return 1.0f / (1.0f + std::exp(-v)); });
}

Matrix Sigmoid::forward(const Matrix& x) {
  y_ = infer(x);
  return y_;
}

Matrix Sigmoid::backward(const Matrix& grad_out) {
  return grad_out.binaryExpr(y_, [](float g, float y) { return g * y * (1.0f - y); });
}

// ---------------------------------------------------------------------------

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential tmp(other);
    layers_ = std::move(tmp.layers_);
  }
  return *this;
}

Matrix Sequential::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Matrix Sequential::infer(const Matrix& x, std::size_t upto) const {
  Matrix h = x;
  for (std::size_t i = 0; i < upto && i < layers_.size(); ++i) h = layers_[i]->infer(h);
  return h;
}

Matrix Sequential::infer_from(const Matrix& x, std::size_t from) const {
  Matrix h = x;
  for (std::size_t i = from; i < layers_.size(); ++i) h = layers_[i]->infer(h);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (Param* p : l->params()) out.push_back(p);
  return out;
}

void Sequential::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (Param* p : const_cast<Sequential*>(this)->params()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::vector<float> Sequential::state() const {
  std::vector<float> flat;
  flat.reserve(parameter_count());
  for (Param* p : const_cast<Sequential*>(this)->params())
    flat.insert(flat.end(), p->value.data(), p->value.data() + p->value.size());
  return flat;
}

void Sequential::load_state(std::span<const float> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch while loading state");
  std::size_t off = 0;
  for (Param* p : params()) {
    std::copy_n(flat.data() + off, static_cast<std::size_t>(p->value.size()), p->value.data());
    off += static_cast<std::size_t>(p->value.size());
    p->m.setZero();
    p->v.setZero();
  }
}

// ---------------------------------------------------------------------------

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const float mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  Matrix p = softmax(logits);
  double loss = 0.0;
  const auto n = static_cast<double>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    loss -= std::log(std::max(1e-12, static_cast<double>(p(i, labels[static_cast<std::size_t>(i)]))));
  if (grad) {
    *grad = p;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) (*grad)(i, labels[static_cast<std::size_t>(i)]) -= 1.0f;
    *grad /= static_cast<float>(n);
  }
  return loss / n;
}

double logistic_loss(const Matrix& logits, float sign, Matrix* grad) {
  // loss = softplus(-sign * l); d/dl = -sign * sigmoid(-sign * l)
  double loss = 0.0;
  const auto n = static_cast<float>(logits.rows());
  if (grad) grad->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const float a = -sign * logits.data()[i];
    loss += a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
    if (grad) grad->data()[i] = -sign / (1.0f + std::exp(-a)) / n;
  }
  return loss / static_cast<double>(n);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

} // namespace seedloop::nn
