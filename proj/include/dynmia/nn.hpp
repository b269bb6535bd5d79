#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"

namespace dynmia {

// Batch matrix: one sample per row, features flattened CHW.
using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named view onto a layer's weights and their gradient. `buffer` marks
// non-trainable state (batch-norm running stats): checkpointed and
// freeze-checked, but never passed to the optimizer.
struct Param {
  std::string name;
  Mat* value = nullptr;
  Mat* grad = nullptr;
  bool buffer = false;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Mat forward(const Mat& x, bool train) = 0;
  virtual Mat backward(const Mat& gy) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<Param>& out) {}
  virtual int out_dim() const = 0;
};

class Linear : public Layer {
 public:
  Linear(int in_dim, int out_dim, Rng& rng);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  int out_dim() const override { return static_cast<int>(w_.rows()); }

  Mat w_, gw_;  // [out, in]
  Mat b_, gb_;  // [1, out]

 private:
  int in_dim_;
  Mat x_;
};

class Relu : public Layer {
 public:
  explicit Relu(int dim) : dim_(dim) {}
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  int out_dim() const override { return dim_; }

 private:
  int dim_;
  Mat mask_;
};

// 3x3 (or kxk) convolution via im2col + GEMM, zero padding.
class Conv2d : public Layer {
 public:
  Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad, Rng& rng,
         bool bias = true);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  int out_dim() const override { return out_c_ * out_h_ * out_w_; }
  int out_c() const { return out_c_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

  Mat w_, gw_;  // [out_c, in_c*k*k]
  Mat b_, gb_;  // [1, out_c]

 private:
  void im2col(const float* src, Mat& col) const;
  void col2im(const Mat& col, float* dst) const;

  int in_c_, in_h_, in_w_, out_c_, k_, stride_, pad_, out_h_, out_w_;
  bool has_bias_;
  std::vector<Mat> cols_;  // cached per sample for backward
};

// Per-channel batch normalization over N*H*W.
class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(int channels, int spatial);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  int out_dim() const override { return c_ * hw_; }

  Mat gamma_, ggamma_, beta_, gbeta_;  // [1, C]
  Mat running_mean_, running_var_;     // [1, C] buffers

 private:
  int c_, hw_;
  float eps_ = 1e-5f, momentum_ = 0.1f;
  bool train_mode_ = false;
  Mat xhat_;
  Eigen::VectorXf invstd_;
};

// [N, C*H*W] -> [N, C]
class GlobalAvgPool : public Layer {
 public:
  GlobalAvgPool(int channels, int spatial) : c_(channels), hw_(spatial) {}
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  int out_dim() const override { return c_; }

 private:
  int c_, hw_;
};

class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& gy) override;
  void collect_params(const std::string& prefix, std::vector<Param>& out) override;
  int out_dim() const override { return layers_.back()->out_dim(); }
  Layer& operator[](size_t i) { return *layers_[i]; }
  size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Losses. Each returns the mean loss and writes dloss/dlogits into grad.
float softmax_ce(const Mat& logits, const std::vector<int32_t>& labels, Mat* grad);
// Binary cross-entropy on a single logit column; targets in {0,1}.
float bce_with_logit(const Mat& logit, const Eigen::VectorXf& target, Mat* grad);

Mat softmax(const Mat& logits);
inline float sigmoidf(float z) { return 1.f / (1.f + std::exp(-z)); }

class Adam {
 public:
  Adam(float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(const std::vector<Param>& params, float lr);

 private:
  float b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

class Sgd {
 public:
  void step(const std::vector<Param>& params, float lr);
};

inline void zero_grads(const std::vector<Param>& params) {
  for (auto& p : params)
    if (!p.buffer) p.grad->setZero();
}

// Non-increasing, hits lr_floor at the final epoch.
float cosine_lr(float lr_init, float lr_floor, int epoch, int total_epochs);

}  // namespace dynmia
