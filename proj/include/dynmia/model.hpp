#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynmia/nn.hpp"

namespace dynmia {

enum class GateStyle { kChannelGating, kBlockSkipping };

// Which stage outputs the channel gates cover.
enum class GateScope { kLastStage, kAllStages };

// kHard: binarized gates (inference). kHardSte: hard forward, sigmoid
// gradient backward (training default). kRelaxed: soft sigmoid gates,
// fully differentiable end to end (used by the finite-difference checks).
enum class GateMode { kHard, kHardSte, kRelaxed };

struct DynamicNetConfig {
  GateStyle style = GateStyle::kChannelGating;
  int num_classes = 10;
  int in_c = 3, in_h = 32, in_w = 32;
  int stem_stride = 2;
  std::vector<int> widths = {16, 32, 64};  // channel-gating stages
  GateScope gate_scope = GateScope::kLastStage;
  int block_width = 32;  // block-skipping
  int n_blocks = 3;
  uint64_t seed = 0;

  int gate_dim() const;
};

// Post-activation when post_relu (channel-gating stages); pre-activation
// sum `shortcut + gate * residual` otherwise, so a skipped block is an
// exact identity and a gate flip changes the output by exactly the
// residual branch value.
class ResBlock {
 public:
  ResBlock(int in_c, int h, int w, int out_c, int stride, bool post_relu, Rng& rng);
  Mat forward(const Mat& x, const Eigen::VectorXf* gate, bool train);
  Mat backward(const Mat& gy, Eigen::VectorXf* ggate);
  // residual branch value for the given input (test oracle support)
  Mat residual(const Mat& x);
  void collect_params(const std::string& prefix, std::vector<Param>& out);
  int out_c() const { return out_c_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_dim() const { return out_c_ * out_h_ * out_w_; }

 private:
  bool post_relu_;
  int out_c_, out_h_, out_w_;
  std::unique_ptr<Conv2d> conv1_, conv2_, proj_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, bnp_;
  std::unique_ptr<Relu> relu1_, relu_out_;
  Mat r_;                 // residual branch output (pre-gate)
  Eigen::VectorXf gate_;  // per-sample scalar gate used in forward
  bool gated_ = false;
};

// 4 conv-bn-relu stages, global pooling, linear head emitting gate logits.
class PolicyNet {
 public:
  PolicyNet(int in_c, int in_h, int in_w, int gate_dim, Rng& rng);
  Mat forward_logits(const Mat& x, bool train);
  Mat backward(const Mat& glogits);
  void collect_params(const std::string& prefix, std::vector<Param>& out);

 private:
  Sequential body_;
};

// Channel gates as a pure function: features [N, C*spatial], gates [N, C].
Mat apply_gates_channel(const Mat& features, const Mat& gates, int spatial);
// and its adjoints
void apply_gates_channel_backward(const Mat& gy, const Mat& features, const Mat& gates, int spatial,
                                  Mat* gfeatures, Mat* ggates);

// Main network (gated residual net + classifier head) plus policy network.
class DynamicNet {
 public:
  explicit DynamicNet(const DynamicNetConfig& cfg);

  const DynamicNetConfig& config() const { return cfg_; }
  int gate_dim() const { return cfg_.gate_dim(); }
  int num_classes() const { return cfg_.num_classes; }

  struct ForwardResult {
    Mat logits;  // [N, num_classes]
    Mat gates;   // [N, gate_dim]; strictly {0,1} unless kRelaxed
  };

  // train_main / train_policy select batch-stats mode per subnet; a
  // frozen subnet must be run with its flag false.
  ForwardResult forward(const Mat& x, GateMode mode = GateMode::kHard, bool train_main = false,
                        bool train_policy = false);

  // Forward with caller-supplied gates instead of the policy output.
  ForwardResult forward_with_gates(const Mat& x, const Mat& gates, bool train_main = false);

  Mat policy_forward(const Mat& x, GateMode mode = GateMode::kHard, bool train_policy = false);

  // Mean cross-entropy with full backward into parameter gradients.
  // extra_dlogits, when given, is added to the loss gradient at the
  // logits (the defense injects its adversary gradient there).
  float loss_backward(const Mat& x, const std::vector<int32_t>& labels, GateMode mode,
                      bool train_main, bool train_policy, const Mat* extra_dlogits = nullptr);

  // Same, but with caller-forced gates (policy untouched); used to train
  // the main network as a plain ungated net.
  float loss_backward_with_gates(const Mat& x, const std::vector<int32_t>& labels, const Mat& gates,
                                 bool train_main, const Mat* extra_dlogits = nullptr);

  // Backward from an externally assembled logits gradient, reusing the
  // caches of the most recent forward call.
  void backward_from_logits(const Mat& dlogits, bool backprop_policy);

  // Post-nonlinearity output of the final convolution stage (pre-gate for
  // channel gating), flattened, plus dloss/d(that output) at the true label.
  void extract_last_conv(const Mat& x, const std::vector<int32_t>& labels, Mat* activation,
                         Mat* gradient);
  int last_conv_dim() const;

  std::vector<Param> params();
  std::vector<Param> main_params();
  std::vector<Param> policy_params();

 private:
  ForwardResult forward_impl(const Mat& x, GateMode mode, const Mat* forced_gates, bool train_main,
                             bool train_policy);
  // Backward from dlogits through the main net; accumulates dgates and,
  // when backprop_policy, continues into the policy net via the sigmoid
  // estimator. Returns dloss/dactivation at the last conv stage if
  // requested.
  void backward_impl(const Mat& dlogits, GateMode mode, bool backprop_policy, Mat* dact_out);

  DynamicNetConfig cfg_;
  // main net
  std::unique_ptr<Conv2d> stem_conv_;
  std::unique_ptr<BatchNorm2d> stem_bn_;
  std::unique_ptr<Relu> stem_relu_;
  std::vector<std::unique_ptr<ResBlock>> blocks_;
  std::unique_ptr<Relu> head_relu_;  // block-skipping style only
  std::unique_ptr<GlobalAvgPool> gap_;
  std::unique_ptr<Linear> head_;
  std::unique_ptr<PolicyNet> policy_;

  // forward caches
  Mat gates_, policy_logits_;
  std::vector<Mat> stage_out_;  // pre-gate stage outputs (channel style)
  Mat last_act_;                // post-nonlinearity final stage output
  std::vector<int> gate_offsets_;
  bool cached_forced_ = false;
};

}  // namespace dynmia
