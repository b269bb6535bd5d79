#pragma once

#include <string>
#include <vector>

#include "dynmia/attack.hpp"
#include "dynmia/defense.hpp"
#include "dynmia/splits.hpp"
#include "dynmia/trainer.hpp"

namespace dynmia {

// Whole-experiment configuration, read from a flat `key=value` file with
// dotted section prefixes (`train.epochs=40`). Unknown keys are rejected.
// Every run artifact carries the fingerprint of the effective config so
// stages from different configs cannot be mixed.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string dataset = "synthetic-10class";

  size_t n_target_train = 400;
  size_t n_target_test = 400;
  size_t n_shadow_train = 400;
  size_t n_shadow_test = 400;
  double overlap_fraction = 0.0;

  GateStyle style = GateStyle::kChannelGating;
  GateScope gate_scope = GateScope::kLastStage;
  int stem_stride = 2;
  std::vector<int> widths = {16, 32, 64};
  int block_width = 32;
  int n_blocks = 3;

  TrainConfig target_train;
  FinetuneMode shadow_mode = FinetuneMode::kBoth;
  TrainConfig shadow_train;
  AttackVariant attack_variant = AttackVariant::kFusion;
  AttackTrainConfig attack;

  bool defense_enabled = false;
  DefenseConfig defense;

  ExperimentConfig();  // sets shadow/attack defaults

  SplitSpec split_spec() const;
  DynamicNetConfig model_config(int num_classes) const;
  void validate() const;
};

// Parse from file contents / from a path. '#' starts a comment.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Deterministic serialization of every effective value, sorted by key.
std::string canonical_text(const ExperimentConfig& cfg);
// 16 lowercase hex chars over canonical_text.
std::string config_fingerprint(const ExperimentConfig& cfg);

const char* gate_style_name(GateStyle s);
GateStyle parse_gate_style(const std::string& name);
const char* gate_scope_name(GateScope s);
GateScope parse_gate_scope(const std::string& name);

}  // namespace dynmia
