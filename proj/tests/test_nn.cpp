#include <doctest.h>

#include <cmath>

#include "dynmia/nn.hpp"
#include "dynmia/rng.hpp"

using namespace dynmia;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, float scale = 1.f) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Scalar probe: sum(forward(x) .* W). Its gradient w.r.t. the output is W,
// so layer.backward(W) must match finite differences of the probe.
float probe(Layer& layer, const Mat& x, const Mat& w, bool train) {
  return layer.forward(x, train).cwiseProduct(w).sum();
}

void check_input_grad(Layer& layer, Mat x, const Mat& w, bool train, float tol = 2e-2f) {
  layer.forward(x, train);
  Mat gx = layer.backward(w);
  const float eps = 1e-2f;
  int checked = 0;
  for (Eigen::Index i = 0; i < x.rows() && checked < 40; ++i)
    for (Eigen::Index j = 0; j < x.cols() && checked < 40; j += std::max<Eigen::Index>(1, x.cols() / 7)) {
      const float orig = x(i, j);
      x(i, j) = orig + eps;
      const float hi = probe(layer, x, w, train);
      x(i, j) = orig - eps;
      const float lo = probe(layer, x, w, train);
      x(i, j) = orig;
      const float fd = (hi - lo) / (2 * eps);
      CHECK(gx(i, j) == doctest::Approx(fd).epsilon(tol).scale(1.0));
      ++checked;
    }
}

void check_param_grads(Layer& layer, const Mat& x, const Mat& w, bool train, float tol = 2e-2f) {
  std::vector<Param> params;
  layer.collect_params("p", params);
  zero_grads(params);
  layer.forward(x, train);
  layer.backward(w);
  const float eps = 1e-2f;
  for (auto& p : params) {
    if (p.buffer) continue;
    int checked = 0;
    for (Eigen::Index i = 0; i < p.value->rows() && checked < 25; ++i)
      for (Eigen::Index j = 0; j < p.value->cols() && checked < 25;
           j += std::max<Eigen::Index>(1, p.value->cols() / 5)) {
        const float orig = (*p.value)(i, j);
        (*p.value)(i, j) = orig + eps;
        const float hi = probe(layer, x, w, train);
        (*p.value)(i, j) = orig - eps;
        const float lo = probe(layer, x, w, train);
        (*p.value)(i, j) = orig;
        const float fd = (hi - lo) / (2 * eps);
        CHECK((*p.grad)(i, j) == doctest::Approx(fd).epsilon(tol).scale(1.0));
        ++checked;
      }
  }
}

}  // namespace

TEST_CASE("Linear matches finite differences") {
  Rng rng(1);
  Linear lin(6, 4, rng);
  Mat x = random_mat(5, 6, rng);
  Mat w = random_mat(5, 4, rng);
  check_input_grad(lin, x, w, true);
  check_param_grads(lin, x, w, true);
}

TEST_CASE("Relu matches finite differences away from the kink") {
  Rng rng(2);
  Relu relu(8);
  Mat x = random_mat(4, 8, rng);
  // keep samples away from 0 so the subgradient is unambiguous
  x = x.unaryExpr([](float v) { return std::abs(v) < 0.1f ? v + 0.5f : v; });
  Mat w = random_mat(4, 8, rng);
  check_input_grad(relu, x, w, true);
}

TEST_CASE("Relu backward works after an eval-mode forward") {
  Rng rng(3);
  Relu relu(4);
  Mat x(1, 4);
  x << -1.f, 2.f, -3.f, 4.f;
  relu.forward(x, false);
  Mat gy = Mat::Ones(1, 4);
  Mat gx = relu.backward(gy);
  CHECK(gx(0, 0) == 0.f);
  CHECK(gx(0, 1) == 1.f);
  CHECK(gx(0, 2) == 0.f);
  CHECK(gx(0, 3) == 1.f);
}

TEST_CASE("Conv2d matches finite differences") {
  Rng rng(4);
  for (int stride : {1, 2}) {
    CAPTURE(stride);
    Conv2d conv(2, 5, 5, 3, 3, stride, 1, rng);
    Mat x = random_mat(3, 2 * 5 * 5, rng);
    Mat w = random_mat(3, conv.out_dim(), rng);
    check_input_grad(conv, x, w, true);
    check_param_grads(conv, x, w, true);
  }
}

TEST_CASE("Conv2d output shape follows stride and padding") {
  Rng rng(5);
  Conv2d conv(3, 32, 32, 8, 3, 2, 1, rng);
  CHECK(conv.out_h() == 16);
  CHECK(conv.out_w() == 16);
  CHECK(conv.out_dim() == 8 * 16 * 16);
  Mat x = random_mat(2, 3 * 32 * 32, rng);
  CHECK(conv.forward(x, false).cols() == conv.out_dim());
  CHECK_THROWS_AS(conv.forward(random_mat(2, 100, rng), false), ShapeMismatch);
}

TEST_CASE("BatchNorm2d train mode matches finite differences") {
  Rng rng(6);
  BatchNorm2d bn(3, 4);
  bn.gamma_ = random_mat(1, 3, rng, 0.5f).array() + 1.f;
  bn.beta_ = random_mat(1, 3, rng, 0.2f);
  Mat x = random_mat(6, 12, rng);
  Mat w = random_mat(6, 12, rng);
  check_input_grad(bn, x, w, true, 4e-2f);
  check_param_grads(bn, x, w, true, 4e-2f);
}

TEST_CASE("BatchNorm2d updates running stats with momentum 0.1") {
  Rng rng(7);
  BatchNorm2d bn(2, 2);
  Mat x = random_mat(8, 4, rng);
  const float mu0 = (x.col(0).sum() + x.col(1).sum()) / 16.f;
  bn.forward(x, true);
  CHECK(bn.running_mean_(0, 0) == doctest::Approx(0.1f * mu0).epsilon(1e-4));
  // eval mode must not touch the stats
  const Mat before = bn.running_mean_;
  bn.forward(x, false);
  CHECK(bn.running_mean_ == before);
}

TEST_CASE("BatchNorm2d eval backward treats the stats as constants") {
  Rng rng(8);
  BatchNorm2d bn(2, 3);
  bn.gamma_(0, 0) = 2.f;
  bn.gamma_(0, 1) = 0.5f;
  bn.running_var_(0, 0) = 4.f;
  bn.running_var_(0, 1) = 1.f;
  Mat x = random_mat(3, 6, rng);
  bn.forward(x, false);
  Mat gy = Mat::Ones(3, 6);
  Mat gx = bn.backward(gy);
  const float inv0 = 1.f / std::sqrt(4.f + 1e-5f);
  CHECK(gx(0, 0) == doctest::Approx(2.f * inv0).epsilon(1e-4));
  CHECK(gx(0, 3) == doctest::Approx(0.5f / std::sqrt(1.f + 1e-5f)).epsilon(1e-4));
}

TEST_CASE("GlobalAvgPool averages each channel") {
  GlobalAvgPool gap(2, 4);
  Mat x(1, 8);
  x << 1, 2, 3, 4, 10, 20, 30, 40;
  Mat y = gap.forward(x, false);
  CHECK(y(0, 0) == doctest::Approx(2.5f));
  CHECK(y(0, 1) == doctest::Approx(25.f));
  Mat gy(1, 2);
  gy << 4.f, 8.f;
  Mat gx = gap.backward(gy);
  CHECK(gx(0, 0) == doctest::Approx(1.f));
  CHECK(gx(0, 5) == doctest::Approx(2.f));
}

TEST_CASE("Sequential composes forward and backward") {
  Rng rng(9);
  Sequential seq;
  seq.add(std::make_unique<Linear>(5, 7, rng));
  seq.add(std::make_unique<Relu>(7));
  seq.add(std::make_unique<Linear>(7, 3, rng));
  Mat x = random_mat(4, 5, rng);
  Mat w = random_mat(4, 3, rng);
  check_input_grad(seq, x, w, true);
  check_param_grads(seq, x, w, true);
  std::vector<Param> params;
  seq.collect_params("net", params);
  CHECK(params.size() == 4);
  CHECK(params[0].name == "net.0.w");
}

TEST_CASE("softmax_ce matches a log-sum-exp oracle") {
  Rng rng(10);
  Mat logits = random_mat(5, 4, rng, 2.f);
  std::vector<int32_t> labels = {0, 3, 1, 2, 2};
  Mat grad;
  const float loss = softmax_ce(logits, labels, &grad);

  double expect = 0;
  for (int i = 0; i < 5; ++i) {
    double mx = logits.row(i).maxCoeff();
    double lse = 0;
    for (int j = 0; j < 4; ++j) lse += std::exp(logits(i, j) - mx);
    expect += mx + std::log(lse) - logits(i, labels[i]);
  }
  expect /= 5;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-5));

  // grad = (softmax - onehot)/N
  Mat p = softmax(logits);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      float g = (p(i, j) - (j == labels[i] ? 1.f : 0.f)) / 5.f;
      CHECK(grad(i, j) == doctest::Approx(g).epsilon(1e-5));
    }
}

TEST_CASE("softmax_ce gradient matches finite differences") {
  Rng rng(11);
  Mat logits = random_mat(3, 4, rng);
  std::vector<int32_t> labels = {1, 0, 3};
  Mat grad;
  softmax_ce(logits, labels, &grad);
  const float eps = 1e-3f;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      Mat l2 = logits;
      l2(i, j) += eps;
      Mat tmp;
      const float hi = softmax_ce(l2, labels, &tmp);
      l2(i, j) -= 2 * eps;
      const float lo = softmax_ce(l2, labels, &tmp);
      CHECK(grad(i, j) == doctest::Approx((hi - lo) / (2 * eps)).epsilon(2e-2).scale(1.0));
    }
}

TEST_CASE("bce_with_logit matches direct formula and is stable") {
  Mat z(3, 1);
  z << 0.f, 3.f, -50.f;  // -50: naive exp would overflow the loss
  Eigen::VectorXf y(3);
  y << 1.f, 0.f, 0.f;
  Mat grad;
  const float loss = bce_with_logit(z, y, &grad);
  const double expect =
      (std::log(2.0) + std::log1p(std::exp(-3.0)) + 3.0 + /* -50, y=0 */ std::log1p(std::exp(-50.0))) / 3.0;
  CHECK(loss == doctest::Approx(expect).epsilon(1e-4));
  CHECK(std::isfinite(loss));
  // grad = (sigmoid(z) - y)/N
  CHECK(grad(0, 0) == doctest::Approx((sigmoidf(0.f) - 1.f) / 3.f).epsilon(1e-4));
  CHECK(grad(2, 0) == doctest::Approx(sigmoidf(-50.f) / 3.f).epsilon(1e-4));
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(12);
  Mat logits = random_mat(4, 6, rng, 10.f);
  Mat p = softmax(logits);
  for (int i = 0; i < 4; ++i) {
    CHECK(p.row(i).sum() == doctest::Approx(1.f).epsilon(1e-5));
    CHECK(p.row(i).minCoeff() >= 0.f);
  }
}

TEST_CASE("Sgd applies w -= lr * g") {
  Mat w(1, 2), g(1, 2);
  w << 1.f, 2.f;
  g << 0.5f, -1.f;
  Sgd opt;
  opt.step({{"w", &w, &g}}, 0.1f);
  CHECK(w(0, 0) == doctest::Approx(0.95f));
  CHECK(w(0, 1) == doctest::Approx(2.1f));
}

TEST_CASE("Adam first step moves by roughly lr in the gradient direction") {
  Mat w = Mat::Zero(1, 2), g(1, 2);
  g << 1.f, -2.f;
  Adam opt;
  opt.step({{"w", &w, &g}}, 0.01f);
  // bias-corrected first step: -lr * g / (|g| + eps') ~= -lr * sign(g)
  CHECK(w(0, 0) == doctest::Approx(-0.01f).epsilon(1e-3));
  CHECK(w(0, 1) == doctest::Approx(0.01f).epsilon(1e-3));
}

TEST_CASE("Adam leaves buffers untouched") {
  Mat w = Mat::Ones(1, 2), buf = Mat::Ones(1, 2), g = Mat::Ones(1, 2);
  Adam opt;
  opt.step({{"w", &w, &g}, {"stat", &buf, nullptr, true}}, 0.5f);
  CHECK(buf == Mat::Ones(1, 2));
  CHECK(w != Mat::Ones(1, 2));
}

TEST_CASE("cosine schedule interpolates from lr_init to lr_floor") {
  CHECK(cosine_lr(0.1f, 0.001f, 0, 10) == doctest::Approx(0.1f));
  CHECK(cosine_lr(0.1f, 0.001f, 9, 10) == doctest::Approx(0.001f));
  float prev = 1.f;
  for (int e = 0; e < 10; ++e) {
    float lr = cosine_lr(0.1f, 0.001f, e, 10);
    CHECK(lr <= prev + 1e-7f);
    CHECK(lr >= 0.001f - 1e-7f);
    prev = lr;
  }
  CHECK(cosine_lr(0.1f, 0.001f, 0, 1) == doctest::Approx(0.001f));
}

TEST_CASE("zero_grads clears trainable gradients only") {
  Mat g = Mat::Ones(2, 2), w = Mat::Ones(2, 2), buf = Mat::Ones(1, 1);
  zero_grads({{"w", &w, &g}, {"b", &buf, nullptr, true}});
  CHECK(g == Mat::Zero(2, 2));
  CHECK(buf == Mat::Ones(1, 1));
}
