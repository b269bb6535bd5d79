#include "dynmia/model.hpp"

#include <numeric>

namespace dynmia {

int DynamicNetConfig::gate_dim() const {
  if (style == GateStyle::kBlockSkipping) return n_blocks;
  if (gate_scope == GateScope::kAllStages)
    return std::accumulate(widths.begin(), widths.end(), 0);
  return widths.back();
}

// -------------------------------------------------------------- ResBlock

ResBlock::ResBlock(int in_c, int h, int w, int out_c, int stride, bool post_relu, Rng& rng)
    : post_relu_(post_relu), out_c_(out_c) {
  conv1_ = std::make_unique<Conv2d>(in_c, h, w, out_c, 3, stride, 1, rng, false);
  out_h_ = conv1_->out_h();
  out_w_ = conv1_->out_w();
  const int hw = out_h_ * out_w_;
  bn1_ = std::make_unique<BatchNorm2d>(out_c, hw);
  relu1_ = std::make_unique<Relu>(out_c * hw);
  conv2_ = std::make_unique<Conv2d>(out_c, out_h_, out_w_, out_c, 3, 1, 1, rng, false);
  bn2_ = std::make_unique<BatchNorm2d>(out_c, hw);
  if (stride != 1 || in_c != out_c) {
    proj_ = std::make_unique<Conv2d>(in_c, h, w, out_c, 1, stride, 0, rng, false);
    bnp_ = std::make_unique<BatchNorm2d>(out_c, hw);
  }
  if (post_relu_) relu_out_ = std::make_unique<Relu>(out_c * hw);
}

Mat ResBlock::forward(const Mat& x, const Eigen::VectorXf* gate, bool train) {
  Mat a = relu1_->forward(bn1_->forward(conv1_->forward(x, train), train), train);
  r_ = bn2_->forward(conv2_->forward(a, train), train);
  Mat s = proj_ ? bnp_->forward(proj_->forward(x, train), train) : x;
  gated_ = gate != nullptr;
  Mat pre;
  if (gated_) {
    gate_ = *gate;
    pre = (r_.array().colwise() * gate_.array()).matrix() + s;
  } else {
    pre = r_ + s;
  }
  return post_relu_ ? relu_out_->forward(pre, train) : pre;
}

Mat ResBlock::backward(const Mat& gy, Eigen::VectorXf* ggate) {
  Mat g = post_relu_ ? relu_out_->backward(gy) : gy;
  if (ggate) {
    if (!gated_) throw GateCountMismatch("ResBlock: gate gradient requested for ungated forward");
    *ggate = g.cwiseProduct(r_).rowwise().sum();
  }
  Mat gr = gated_ ? Mat((g.array().colwise() * gate_.array()).matrix()) : g;
  Mat t = conv2_->backward(bn2_->backward(gr));
  Mat gx = conv1_->backward(bn1_->backward(relu1_->backward(t)));
  if (proj_)
    gx += proj_->backward(bnp_->backward(g));
  else
    gx += g;
  return gx;
}

Mat ResBlock::residual(const Mat& x) {
  // eval-mode recomputation; clobbers forward caches
  Mat a = relu1_->forward(bn1_->forward(conv1_->forward(x, false), false), false);
  return bn2_->forward(conv2_->forward(a, false), false);
}

void ResBlock::collect_params(const std::string& prefix, std::vector<Param>& out) {
  conv1_->collect_params(prefix + ".conv1", out);
  bn1_->collect_params(prefix + ".bn1", out);
  conv2_->collect_params(prefix + ".conv2", out);
  bn2_->collect_params(prefix + ".bn2", out);
  if (proj_) {
    proj_->collect_params(prefix + ".proj", out);
    bnp_->collect_params(prefix + ".bnp", out);
  }
}

// ------------------------------------------------------------- PolicyNet

PolicyNet::PolicyNet(int in_c, int in_h, int in_w, int gate_dim, Rng& rng) {
  const int chans[4] = {8, 16, 32, 32};
  const int strides[4] = {2, 2, 2, 1};
  int c = in_c, h = in_h, w = in_w;
  for (int i = 0; i < 4; ++i) {
    auto conv = std::make_unique<Conv2d>(c, h, w, chans[i], 3, strides[i], 1, rng, false);
    c = chans[i];
    h = conv->out_h();
    w = conv->out_w();
    body_.add(std::move(conv));
    body_.add(std::make_unique<BatchNorm2d>(c, h * w));
    body_.add(std::make_unique<Relu>(c * h * w));
  }
  body_.add(std::make_unique<GlobalAvgPool>(c, h * w));
  body_.add(std::make_unique<Linear>(c, gate_dim, rng));
}

Mat PolicyNet::forward_logits(const Mat& x, bool train) { return body_.forward(x, train); }
Mat PolicyNet::backward(const Mat& glogits) { return body_.backward(glogits); }
void PolicyNet::collect_params(const std::string& prefix, std::vector<Param>& out) {
  body_.collect_params(prefix, out);
}

// ---------------------------------------------------------- channel gates

Mat apply_gates_channel(const Mat& features, const Mat& gates, int spatial) {
  if (spatial <= 0 || features.cols() % spatial != 0)
    throw ShapeMismatch("apply_gates_channel: feature columns not divisible by spatial size");
  const int channels = static_cast<int>(features.cols()) / spatial;
  if (gates.cols() != channels || gates.rows() != features.rows())
    throw GateCountMismatch("apply_gates_channel: expected gates [" +
                            std::to_string(features.rows()) + " x " + std::to_string(channels) +
                            "], got [" + std::to_string(gates.rows()) + " x " +
                            std::to_string(gates.cols()) + "]");
  Mat y(features.rows(), features.cols());
  for (int c = 0; c < channels; ++c)
    y.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
        features.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).array().colwise() *
        gates.col(c).array();
  return y;
}

void apply_gates_channel_backward(const Mat& gy, const Mat& features, const Mat& gates, int spatial,
                                  Mat* gfeatures, Mat* ggates) {
  const int channels = static_cast<int>(features.cols()) / spatial;
  if (gfeatures) gfeatures->resize(features.rows(), features.cols());
  if (ggates) ggates->resize(gates.rows(), gates.cols());
  for (int c = 0; c < channels; ++c) {
    auto gyc = gy.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial);
    if (gfeatures)
      gfeatures->middleCols(static_cast<Eigen::Index>(c) * spatial, spatial) =
          gyc.array().colwise() * gates.col(c).array();
    if (ggates)
      ggates->col(c) =
          gyc.cwiseProduct(features.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial))
              .rowwise()
              .sum();
  }
}

// ------------------------------------------------------------ DynamicNet

DynamicNet::DynamicNet(const DynamicNetConfig& cfg) : cfg_(cfg) {
  Rng rng(stage_seed(cfg.seed, "model/init"));
  int c = cfg.in_c, h = cfg.in_h, w = cfg.in_w;
  const bool channel = cfg.style == GateStyle::kChannelGating;
  const int stem_width = channel ? cfg.widths.front() : cfg.block_width;

  stem_conv_ = std::make_unique<Conv2d>(c, h, w, stem_width, 3, cfg.stem_stride, 1, rng, false);
  c = stem_width;
  h = stem_conv_->out_h();
  w = stem_conv_->out_w();
  stem_bn_ = std::make_unique<BatchNorm2d>(c, h * w);
  stem_relu_ = std::make_unique<Relu>(c * h * w);

  if (channel) {
    int offset = 0;
    for (size_t i = 0; i < cfg.widths.size(); ++i) {
      const int stride = i == 0 ? 1 : 2;
      blocks_.push_back(std::make_unique<ResBlock>(c, h, w, cfg.widths[i], stride, true, rng));
      c = cfg.widths[i];
      h = blocks_.back()->out_h();
      w = blocks_.back()->out_w();
      if (cfg.gate_scope == GateScope::kAllStages) {
        gate_offsets_.push_back(offset);
        offset += c;
      } else {
        gate_offsets_.push_back(i + 1 == cfg.widths.size() ? 0 : -1);  // -1 = ungated
      }
    }
  } else {
    for (int i = 0; i < cfg.n_blocks; ++i)
      blocks_.push_back(std::make_unique<ResBlock>(c, h, w, c, 1, false, rng));
    head_relu_ = std::make_unique<Relu>(c * h * w);
  }
  gap_ = std::make_unique<GlobalAvgPool>(c, h * w);
  head_ = std::make_unique<Linear>(c, cfg.num_classes, rng);
  policy_ = std::make_unique<PolicyNet>(cfg.in_c, cfg.in_h, cfg.in_w, cfg.gate_dim(), rng);
}

int DynamicNet::last_conv_dim() const { return blocks_.back()->out_dim(); }

namespace {

Mat gates_from_logits(const Mat& logits, GateMode mode) {
  if (mode == GateMode::kRelaxed)
    return logits.unaryExpr([](float z) { return sigmoidf(z); });
  // sigmoid(z) >= 0.5 iff z >= 0; ties binarize to 1
  return logits.unaryExpr([](float z) { return z >= 0.f ? 1.f : 0.f; });
}

}  // namespace

Mat DynamicNet::policy_forward(const Mat& x, GateMode mode, bool train_policy) {
  if (x.cols() != cfg_.in_c * cfg_.in_h * cfg_.in_w)
    throw ShapeMismatch("policy_forward: input shape mismatch");
  Mat gates = gates_from_logits(policy_->forward_logits(x, train_policy), mode);
  if (mode != GateMode::kRelaxed)
    for (Eigen::Index i = 0; i < gates.size(); ++i)
      if (gates.data()[i] != 0.f && gates.data()[i] != 1.f)
        throw Error("gate binarity violated");  // unreachable by construction
  return gates;
}

DynamicNet::ForwardResult DynamicNet::forward_impl(const Mat& x, GateMode mode,
                                                   const Mat* forced_gates, bool train_main,
                                                   bool train_policy) {
  if (x.cols() != cfg_.in_c * cfg_.in_h * cfg_.in_w)
    throw ShapeMismatch("forward: input shape mismatch");
  cached_forced_ = forced_gates != nullptr;
  if (forced_gates) {
    if (forced_gates->cols() != gate_dim() || forced_gates->rows() != x.rows())
      throw GateCountMismatch("forward_with_gates: wrong gate shape");
    gates_ = *forced_gates;
  } else {
    policy_logits_ = policy_->forward_logits(x, train_policy);
    gates_ = gates_from_logits(policy_logits_, mode);
  }

  Mat h = stem_relu_->forward(stem_bn_->forward(stem_conv_->forward(x, train_main), train_main),
                              train_main);
  if (cfg_.style == GateStyle::kChannelGating) {
    stage_out_.assign(blocks_.size(), Mat());
    for (size_t i = 0; i < blocks_.size(); ++i) {
      h = blocks_[i]->forward(h, nullptr, train_main);
      if (i + 1 == blocks_.size()) last_act_ = h;
      if (gate_offsets_[i] >= 0) {
        stage_out_[i] = h;
        const int cch = blocks_[i]->out_c();
        h = apply_gates_channel(h, gates_.middleCols(gate_offsets_[i], cch),
                                blocks_[i]->out_h() * blocks_[i]->out_w());
      }
    }
  } else {
    for (size_t k = 0; k < blocks_.size(); ++k) {
      Eigen::VectorXf gcol = gates_.col(k);
      h = blocks_[k]->forward(h, &gcol, train_main);
    }
    h = head_relu_->forward(h, train_main);
    last_act_ = h;
  }
  Mat pooled = gap_->forward(h, train_main);
  return {head_->forward(pooled, train_main), gates_};
}

DynamicNet::ForwardResult DynamicNet::forward(const Mat& x, GateMode mode, bool train_main,
                                              bool train_policy) {
  return forward_impl(x, mode, nullptr, train_main, train_policy);
}

DynamicNet::ForwardResult DynamicNet::forward_with_gates(const Mat& x, const Mat& gates,
                                                         bool train_main) {
  return forward_impl(x, GateMode::kHard, &gates, train_main, false);
}

void DynamicNet::backward_impl(const Mat& dlogits, GateMode mode, bool backprop_policy,
                               Mat* dact_out) {
  Mat g = gap_->backward(head_->backward(dlogits));
  Mat dgates = Mat::Zero(dlogits.rows(), gate_dim());

  if (cfg_.style == GateStyle::kChannelGating) {
    for (size_t ri = blocks_.size(); ri-- > 0;) {
      if (gate_offsets_[ri] >= 0) {
        const int cch = blocks_[ri]->out_c();
        const int sp = blocks_[ri]->out_h() * blocks_[ri]->out_w();
        Mat gf, gg;
        apply_gates_channel_backward(g, stage_out_[ri], gates_.middleCols(gate_offsets_[ri], cch),
                                     sp, &gf, &gg);
        dgates.middleCols(gate_offsets_[ri], cch) = gg;
        g = std::move(gf);
      }
      if (ri + 1 == blocks_.size() && dact_out) *dact_out = g;
      g = blocks_[ri]->backward(g, nullptr);
    }
  } else {
    if (dact_out) *dact_out = g;
    g = head_relu_->backward(g);
    for (size_t k = blocks_.size(); k-- > 0;) {
      Eigen::VectorXf gg;
      g = blocks_[k]->backward(g, &gg);
      dgates.col(k) = gg;
    }
  }
  stem_conv_->backward(stem_bn_->backward(stem_relu_->backward(g)));

  if (backprop_policy && !cached_forced_) {
    // straight-through / relaxed estimator: route gate gradients through
    // the sigmoid of the policy logits
    Mat sig = policy_logits_.unaryExpr([](float z) { return sigmoidf(z); });
    Mat dlog = dgates.cwiseProduct(sig.cwiseProduct(Mat::Ones(sig.rows(), sig.cols()) - sig));
    policy_->backward(dlog);
  }
  (void)mode;
}

float DynamicNet::loss_backward(const Mat& x, const std::vector<int32_t>& labels, GateMode mode,
                                bool train_main, bool train_policy, const Mat* extra_dlogits) {
  ForwardResult fr = forward_impl(x, mode, nullptr, train_main, train_policy);
  Mat dlogits;
  float loss = softmax_ce(fr.logits, labels, &dlogits);
  if (extra_dlogits) dlogits += *extra_dlogits;
  backward_impl(dlogits, mode, train_policy, nullptr);
  return loss;
}

void DynamicNet::backward_from_logits(const Mat& dlogits, bool backprop_policy) {
  backward_impl(dlogits, GateMode::kHardSte, backprop_policy, nullptr);
}

float DynamicNet::loss_backward_with_gates(const Mat& x, const std::vector<int32_t>& labels,
                                           const Mat& gates, bool train_main,
                                           const Mat* extra_dlogits) {
  ForwardResult fr = forward_impl(x, GateMode::kHard, &gates, train_main, false);
  Mat dlogits;
  float loss = softmax_ce(fr.logits, labels, &dlogits);
  if (extra_dlogits) dlogits += *extra_dlogits;
  backward_impl(dlogits, GateMode::kHard, false, nullptr);
  return loss;
}

void DynamicNet::extract_last_conv(const Mat& x, const std::vector<int32_t>& labels,
                                   Mat* activation, Mat* gradient) {
  ForwardResult fr = forward_impl(x, GateMode::kHard, nullptr, false, false);
  Mat dlogits;
  softmax_ce(fr.logits, labels, &dlogits);
  Mat dact;
  backward_impl(dlogits, GateMode::kHard, false, &dact);
  if (activation) *activation = last_act_;
  if (gradient) *gradient = dact;
}

std::vector<Param> DynamicNet::params() {
  auto out = main_params();
  auto pol = policy_params();
  out.insert(out.end(), pol.begin(), pol.end());
  return out;
}

std::vector<Param> DynamicNet::main_params() {
  std::vector<Param> out;
  stem_conv_->collect_params("main.stem.conv", out);
  stem_bn_->collect_params("main.stem.bn", out);
  for (size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i]->collect_params("main.block" + std::to_string(i), out);
  head_->collect_params("main.head", out);
  return out;
}

std::vector<Param> DynamicNet::policy_params() {
  std::vector<Param> out;
  policy_->collect_params("policy", out);
  return out;
}

}  // namespace dynmia
