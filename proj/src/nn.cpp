#include "dynmia/nn.hpp"

#include <cmath>

namespace dynmia {

namespace {

void check_cols(const Mat& x, int expect, const char* who) {
  if (x.cols() != expect)
    throw ShapeMismatch(std::string(who) + ": expected " + std::to_string(expect) +
                        " input columns, got " + std::to_string(x.cols()));
}

float he_std(int fan_in) { return std::sqrt(2.f / static_cast<float>(fan_in)); }

void fill_normal(Mat& m, float stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.f, stddev);
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_dim, int out_dim, Rng& rng) : in_dim_(in_dim) {
  w_.resize(out_dim, in_dim);
  fill_normal(w_, he_std(in_dim), rng);
  gw_ = Mat::Zero(out_dim, in_dim);
  b_ = Mat::Zero(1, out_dim);
  gb_ = Mat::Zero(1, out_dim);
}

Mat Linear::forward(const Mat& x, bool) {
  check_cols(x, in_dim_, "Linear");
  x_ = x;
  return (x * w_.transpose()).rowwise() + b_.row(0);
}

Mat Linear::backward(const Mat& gy) {
  gw_ += gy.transpose() * x_;
  gb_.row(0) += gy.colwise().sum();
  return gy * w_;
}

void Linear::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

// ------------------------------------------------------------------ Relu

Mat Relu::forward(const Mat& x, bool) {
  check_cols(x, dim_, "Relu");
  Mat y = x.cwiseMax(0.f);
  mask_ = (x.array() > 0.f).cast<float>();
  return y;
}

Mat Relu::backward(const Mat& gy) { return gy.cwiseProduct(mask_); }

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad, Rng& rng,
               bool bias)
    : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad),
      has_bias_(bias) {
  out_h_ = (in_h + 2 * pad - kernel) / stride + 1;
  out_w_ = (in_w + 2 * pad - kernel) / stride + 1;
  const int fan_in = in_c * kernel * kernel;
  w_.resize(out_c, fan_in);
  fill_normal(w_, he_std(fan_in), rng);
  gw_ = Mat::Zero(out_c, fan_in);
  b_ = Mat::Zero(1, out_c);
  gb_ = Mat::Zero(1, out_c);
}

void Conv2d::im2col(const float* src, Mat& col) const {
  const int P = out_h_ * out_w_;
  col.resize(in_c_ * k_ * k_, P);
  for (int c = 0; c < in_c_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        float* dst = col.data() + static_cast<size_t>((c * k_ + ky) * k_ + kx) * P;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * stride_ + ky - pad_;
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * stride_ + kx - pad_;
            dst[oy * out_w_ + ox] = (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_)
                                        ? src[(c * in_h_ + iy) * in_w_ + ix]
                                        : 0.f;
          }
        }
      }
}

void Conv2d::col2im(const Mat& col, float* dst) const {
  const int P = out_h_ * out_w_;
  for (int c = 0; c < in_c_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const float* src = col.data() + static_cast<size_t>((c * k_ + ky) * k_ + kx) * P;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * stride_ + ky - pad_;
          if (iy < 0 || iy >= in_h_) continue;
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * stride_ + kx - pad_;
            if (ix >= 0 && ix < in_w_) dst[(c * in_h_ + iy) * in_w_ + ix] += src[oy * out_w_ + ox];
          }
        }
      }
}

Mat Conv2d::forward(const Mat& x, bool) {
  check_cols(x, in_c_ * in_h_ * in_w_, "Conv2d");
  const auto n = x.rows();
  const int P = out_h_ * out_w_;
  Mat y(n, out_c_ * P);
  cols_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat& c = cols_[i];
    im2col(x.row(i).data(), c);
    Eigen::Map<Mat> out(y.row(i).data(), out_c_, P);
    out.noalias() = w_ * c;
    if (has_bias_) out.colwise() += b_.row(0).transpose();
  }
  return y;
}

Mat Conv2d::backward(const Mat& gy) {
  const auto n = gy.rows();
  const int P = out_h_ * out_w_;
  Mat gx = Mat::Zero(n, in_c_ * in_h_ * in_w_);
  Mat dcol;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Map<const Mat> g(gy.row(i).data(), out_c_, P);
    gw_.noalias() += g * cols_[i].transpose();
    if (has_bias_) gb_.row(0).transpose() += g.rowwise().sum();
    dcol.noalias() = w_.transpose() * g;
    col2im(dcol, gx.row(i).data());
  }
  return gx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  if (has_bias_) out.push_back({prefix + ".b", &b_, &gb_});
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, int spatial) : c_(channels), hw_(spatial) {
  gamma_ = Mat::Ones(1, channels);
  beta_ = Mat::Zero(1, channels);
  ggamma_ = Mat::Zero(1, channels);
  gbeta_ = Mat::Zero(1, channels);
  running_mean_ = Mat::Zero(1, channels);
  running_var_ = Mat::Ones(1, channels);
}

Mat BatchNorm2d::forward(const Mat& x, bool train) {
  check_cols(x, c_ * hw_, "BatchNorm2d");
  const auto n = x.rows();
  const float m = static_cast<float>(n * hw_);
  Mat y(n, c_ * hw_);
  if (train) {
    xhat_.resize(n, c_ * hw_);
    invstd_.resize(c_);
  }
  for (int c = 0; c < c_; ++c) {
    auto xc = x.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_);
    float mu, var;
    if (train) {
      mu = xc.sum() / m;
      var = (xc.array() - mu).square().sum() / m;
      running_mean_(0, c) = (1.f - momentum_) * running_mean_(0, c) + momentum_ * mu;
      running_var_(0, c) = (1.f - momentum_) * running_var_(0, c) + momentum_ * var;
    } else {
      mu = running_mean_(0, c);
      var = running_var_(0, c);
    }
    const float inv = 1.f / std::sqrt(var + eps_);
    if (train) {
      invstd_(c) = inv;
      xhat_.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_) = (xc.array() - mu) * inv;
      y.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_) =
          gamma_(0, c) * xhat_.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_).array() + beta_(0, c);
    } else {
      y.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_) =
          gamma_(0, c) * inv * (xc.array() - mu) + beta_(0, c);
    }
  }
  train_mode_ = train;
  return y;
}

Mat BatchNorm2d::backward(const Mat& gy) {
  const auto n = gy.rows();
  Mat gx(n, c_ * hw_);
  for (int c = 0; c < c_; ++c) {
    auto gc = gy.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_);
    if (!train_mode_) {
      // eval-mode stats are constants
      const float inv = 1.f / std::sqrt(running_var_(0, c) + eps_);
      gx.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_) = gc.array() * (gamma_(0, c) * inv);
      continue;
    }
    const float m = static_cast<float>(n * hw_);
    auto xh = xhat_.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_);
    const float sum_gy = gc.sum();
    const float sum_gy_xh = gc.cwiseProduct(xh).sum();
    ggamma_(0, c) += sum_gy_xh;
    gbeta_(0, c) += sum_gy;
    gx.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_) =
        (gamma_(0, c) * invstd_(c) / m) * (m * gc.array() - sum_gy - xh.array() * sum_gy_xh);
  }
  return gx;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
  out.push_back({prefix + ".beta", &beta_, &gbeta_});
  out.push_back({prefix + ".running_mean", &running_mean_, nullptr, true});
  out.push_back({prefix + ".running_var", &running_var_, nullptr, true});
}

// --------------------------------------------------------- GlobalAvgPool

Mat GlobalAvgPool::forward(const Mat& x, bool) {
  check_cols(x, c_ * hw_, "GlobalAvgPool");
  Mat y(x.rows(), c_);
  for (int c = 0; c < c_; ++c)
    y.col(c) = x.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_).rowwise().mean();
  return y;
}

Mat GlobalAvgPool::backward(const Mat& gy) {
  Mat gx(gy.rows(), c_ * hw_);
  for (int c = 0; c < c_; ++c)
    gx.middleCols(static_cast<Eigen::Index>(c) * hw_, hw_).colwise() = gy.col(c) / static_cast<float>(hw_);
  return gx;
}

// ------------------------------------------------------------ Sequential

Mat Sequential::forward(const Mat& x, bool train) {
  Mat h = x;
  for (auto& l : layers_) h = l->forward(h, train);
  return h;
}

Mat Sequential::backward(const Mat& gy) {
  Mat g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_params(const std::string& prefix, std::vector<Param>& out) {
  for (size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params(prefix + "." + std::to_string(i), out);
}

// ---------------------------------------------------------------- Losses

Mat softmax(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::RowVectorXf z = logits.row(i).array() - logits.row(i).maxCoeff();
    Eigen::RowVectorXf e = z.array().exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

float softmax_ce(const Mat& logits, const std::vector<int32_t>& labels, Mat* grad) {
  if (static_cast<size_t>(logits.rows()) != labels.size())
    throw ShapeMismatch("softmax_ce: logits/labels batch mismatch");
  const float n = static_cast<float>(logits.rows());
  Mat p = softmax(logits);
  float loss = 0.f;
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    loss -= std::log(std::max(p(i, labels[i]), 1e-12f));
  if (grad) {
    *grad = p / n;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) (*grad)(i, labels[i]) -= 1.f / n;
  }
  return loss / n;
}

float bce_with_logit(const Mat& logit, const Eigen::VectorXf& target, Mat* grad) {
  if (logit.cols() != 1 || logit.rows() != target.size())
    throw ShapeMismatch("bce_with_logit: shape mismatch");
  const float n = static_cast<float>(logit.rows());
  float loss = 0.f;
  for (Eigen::Index i = 0; i < logit.rows(); ++i) {
    const float z = logit(i, 0);
    loss += std::max(z, 0.f) - z * target(i) + std::log1p(std::exp(-std::abs(z)));
  }
  if (grad) {
    grad->resize(logit.rows(), 1);
    for (Eigen::Index i = 0; i < logit.rows(); ++i)
      (*grad)(i, 0) = (sigmoidf(logit(i, 0)) - target(i)) / n;
  }
  return loss / n;
}

// ------------------------------------------------------------ Optimizers

void Adam::step(const std::vector<Param>& params, float lr) {
  if (m_.empty()) {
    for (auto& p : params) {
      if (p.buffer) continue;
      m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const float bc1 = 1.f - std::pow(b1_, static_cast<float>(t_));
  const float bc2 = 1.f - std::pow(b2_, static_cast<float>(t_));
  size_t s = 0;
  for (auto& p : params) {
    if (p.buffer) continue;
    m_[s] = b1_ * m_[s] + (1.f - b1_) * (*p.grad);
    v_[s] = b2_ * v_[s].array() + (1.f - b2_) * p.grad->array().square();
    p.value->array() -= lr * (m_[s].array() / bc1) / ((v_[s].array() / bc2).sqrt() + eps_);
    ++s;
  }
}

void Sgd::step(const std::vector<Param>& params, float lr) {
  for (auto& p : params) {
    if (p.buffer) continue;
    p.value->array() -= lr * p.grad->array();
  }
}

float cosine_lr(float lr_init, float lr_floor, int epoch, int total_epochs) {
  const float t = total_epochs <= 1 ? 1.f : static_cast<float>(epoch) / (total_epochs - 1);
  return lr_floor + 0.5f * (lr_init - lr_floor) * (1.f + std::cos(t * static_cast<float>(M_PI)));
}

}  // namespace dynmia
