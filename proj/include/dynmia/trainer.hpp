#pragma once

#include <ostream>
#include <span>

#include "dynmia/dataset.hpp"
#include "dynmia/model.hpp"
#include "dynmia/splits.hpp"

namespace dynmia {

enum class OptimizerKind { kAdam, kSgd };
enum class LrSchedule { kCosine, kConstant };

struct TrainConfig {
  int epochs = 60;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  float lr_init = 0.01f;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  float lr_floor = 0.0001f;
  int batch_size = 64;
  uint64_t seed = 0;
  GateMode gate_mode = GateMode::kHardSte;  // training-time gate estimator

  void validate() const;  // InvalidSpec on bad fields
  float lr_at(int epoch) const;
};

enum class FinetuneMode { kPolicy, kMain, kBoth };

const char* finetune_mode_name(FinetuneMode mode);
FinetuneMode parse_finetune_mode(const std::string& name);

// [n, C*H*W] batch normalized to [0,1], plus labels.
Mat make_batch(const Pool& pool, std::span<const uint32_t> indices, std::vector<int32_t>* labels);

// Trains in place on partitions.target_train, logging one line per epoch:
// epoch \t train_loss \t train_acc \t test_acc \t lr
void train_target(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

// Fine-tunes `net` (a copy of the trained target) on the shadow split.
// The frozen subnet is run in eval mode, excluded from the optimizer, and
// verified bitwise unchanged after every epoch (FrozenViolation otherwise).
void finetune_shadow(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                     FinetuneMode mode, const TrainConfig& cfg, std::ostream* log = nullptr);

// Fraction of correct argmax predictions over the index set.
float evaluate_accuracy(DynamicNet& net, const Pool& pool, std::span<const uint32_t> indices);

}  // namespace dynmia
