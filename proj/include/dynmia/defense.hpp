#pragma once

#include <ostream>
#include <span>

#include "dynmia/trainer.hpp"

namespace dynmia {

struct DefenseConfig {
  float lambda = 1.0f;  // privacy-regularization weight
  int inner_steps = 1;  // inference-model updates per target update
  int epochs = 60;      // phase 1: main-network min-max training
  int joint_epochs = 0; // phase 2: joint main+policy fine-tune; 0 = epochs/4
  uint64_t seed = 0;
  TrainConfig train;              // optimizer/lr/batch settings
  bool fusion_adversary = false;  // defender's inner model sees gates too
};

// Adversarial-regularization training: the inner inference model learns to
// separate member from defender-held-out non-member features while the
// target is trained on task loss + lambda * inference gain. Phase 1
// trains the main network ungated (all-ones gates); phase 2 fine-tunes
// main and policy networks jointly with the regularizer still active.
// With lambda = 0 this is exactly train_target.
// `defender_nonmembers` must be disjoint from the evaluation splits.
void train_defended_target(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                           std::span<const uint32_t> defender_nonmembers, const DefenseConfig& cfg,
                           std::ostream* log = nullptr);

// Pool indices unused by any partition, for the defender-private split.
std::vector<uint32_t> leftover_indices(const DataPartitions& parts, size_t pool_size);

}  // namespace dynmia
