#pragma once

#include <ostream>

#include "dynmia/checkpoint.hpp"
#include "dynmia/feature.hpp"
#include "dynmia/nn.hpp"

namespace dynmia {

enum class AttackVariant { kFusion, kLogitsOnly, kGradient, kActivation };

const char* attack_variant_name(AttackVariant v);
AttackVariant parse_attack_variant(const std::string& name);

struct AttackTrainConfig {
  int epochs = 100;
  float lr = 0.001f;
  int batch_size = 1000;
  uint64_t seed = 0;
  bool softmax_inputs = false;  // ablation: feed softmax(logits) to branch2
};

// Two-branch membership classifier. branch1 compresses the side
// information (control flow / gradient / activation) to a 10-dim
// bottleneck; branch2 fuses it with the class logits into one membership
// logit. The logits-only variant drops branch1 entirely.
class AttackModel {
 public:
  static constexpr int kBottleneck = 10;

  AttackModel(AttackVariant variant, int branch1_dim, int num_classes, uint64_t seed,
              bool softmax_inputs = false);

  AttackVariant variant() const { return variant_; }
  int branch1_dim() const { return branch1_dim_; }
  int num_classes() const { return num_classes_; }
  bool softmax_inputs() const { return softmax_inputs_; }

  // Pre-sigmoid membership logit, one column.
  Mat forward_logit(const Mat& branch1_in, const Mat& logits, bool train = false);
  // Returns dloss/d(class logits) — the defense's coupling gradient.
  Mat backward(const Mat& gout);
  std::vector<Param> params();

  // Membership score, clamped strictly inside (0,1). decision = score >= 0.5
  float score(const FeatureRecord& rec);
  Eigen::VectorXf scores(const FeatureFile& file);

 private:
  AttackVariant variant_;
  int branch1_dim_, num_classes_;
  bool softmax_inputs_;
  Sequential branch1_, branch2_;
  Mat probs_;  // cached softmax for backward when softmax_inputs_
};

// Design matrices for a variant: branch1 side input (empty for
// logits-only) and the class logits. MissingFeature / DimensionMismatch
// on bad files.
void attack_inputs(const FeatureFile& file, AttackVariant variant, Mat* branch1, Mat* logits);

// Binary cross-entropy training on member (y=1) + non-member (y=0) files.
AttackModel train_attack(const FeatureFile& members, const FeatureFile& nonmembers,
                         AttackVariant variant, const AttackTrainConfig& cfg,
                         std::ostream* log = nullptr);

Checkpoint attack_to_checkpoint(AttackModel& model);
AttackModel attack_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dynmia
