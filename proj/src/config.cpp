#include "dynmia/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

const char* gate_style_name(GateStyle s) {
  return s == GateStyle::kChannelGating ? "channel-gating" : "block-skipping";
}

GateStyle parse_gate_style(const std::string& name) {
  if (name == "channel-gating") return GateStyle::kChannelGating;
  if (name == "block-skipping") return GateStyle::kBlockSkipping;
  throw InvalidSpec("unknown gate style '" + name + "'");
}

const char* gate_scope_name(GateScope s) {
  return s == GateScope::kLastStage ? "last-stage" : "all-stages";
}

GateScope parse_gate_scope(const std::string& name) {
  if (name == "last-stage") return GateScope::kLastStage;
  if (name == "all-stages") return GateScope::kAllStages;
  throw InvalidSpec("unknown gate scope '" + name + "'");
}

namespace {

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw InvalidSpec("unknown optimizer '" + name + "'");
}

const char* schedule_name(LrSchedule s) {
  return s == LrSchedule::kCosine ? "cosine" : "constant";
}

LrSchedule parse_schedule(const std::string& name) {
  if (name == "cosine") return LrSchedule::kCosine;
  if (name == "constant") return LrSchedule::kConstant;
  throw InvalidSpec("unknown lr schedule '" + name + "'");
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidSpec("bad boolean '" + v + "' for " + key);
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidSpec("bad integer '" + v + "' for " + key);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidSpec("bad number '" + v + "' for " + key);
  }
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  for (auto tok : split(v, ','))
    out.push_back(parse_int(std::string(tok), key));
  if (out.empty()) throw InvalidSpec("empty list for " + key);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void apply_train_key(TrainConfig& t, const std::string& sub, const std::string& v,
                     const std::string& key) {
  if (sub == "epochs") t.epochs = parse_int(v, key);
  else if (sub == "optimizer") t.optimizer = parse_optimizer(v);
  else if (sub == "lr_init") t.lr_init = static_cast<float>(parse_double(v, key));
  else if (sub == "lr_schedule") t.lr_schedule = parse_schedule(v);
  else if (sub == "lr_floor") t.lr_floor = static_cast<float>(parse_double(v, key));
  else if (sub == "batch_size") t.batch_size = parse_int(v, key);
  else throw InvalidSpec("unknown config key '" + key + "'");
}

void emit_train(std::map<std::string, std::string>& kv, const std::string& prefix,
                const TrainConfig& t) {
  kv[prefix + ".epochs"] = std::to_string(t.epochs);
  kv[prefix + ".optimizer"] = optimizer_name(t.optimizer);
  kv[prefix + ".lr_init"] = format_float(t.lr_init);
  kv[prefix + ".lr_schedule"] = schedule_name(t.lr_schedule);
  kv[prefix + ".lr_floor"] = format_float(t.lr_floor);
  kv[prefix + ".batch_size"] = std::to_string(t.batch_size);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  target_train.epochs = 40;
  shadow_train.epochs = 15;
  shadow_train.lr_init = 0.002f;
  shadow_train.lr_floor = 0.0001f;
  defense.epochs = 40;
}

SplitSpec ExperimentConfig::split_spec() const {
  return {dataset, stage_seed(seed, "splits"), n_target_train, n_target_test,
          n_shadow_train, n_shadow_test, overlap_fraction};
}

DynamicNetConfig ExperimentConfig::model_config(int num_classes) const {
  DynamicNetConfig m;
  m.style = style;
  m.num_classes = num_classes;
  m.stem_stride = stem_stride;
  m.widths = widths;
  m.gate_scope = gate_scope;
  m.block_width = block_width;
  m.n_blocks = n_blocks;
  m.seed = stage_seed(seed, "model");
  return m;
}

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw InvalidSpec("dataset must be set");
  if (n_target_train == 0 || n_target_test == 0 || n_shadow_train == 0 || n_shadow_test == 0)
    throw InvalidSpec("all split sizes must be positive");
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0)
    throw InvalidSpec("overlap_fraction must be in [0,1]");
  if (stem_stride < 1) throw InvalidSpec("stem_stride must be >= 1");
  if (widths.empty()) throw InvalidSpec("widths must be non-empty");
  for (int w : widths)
    if (w < 1) throw InvalidSpec("widths must be positive");
  if (block_width < 1 || n_blocks < 1)
    throw InvalidSpec("block_width and n_blocks must be positive");
  target_train.validate();
  shadow_train.validate();
  if (attack.epochs < 1 || attack.batch_size < 1 || !(attack.lr > 0.f))
    throw InvalidSpec("bad attack training settings");
  if (defense.lambda < 0.f) throw InvalidSpec("defense.lambda must be >= 0");
  if (defense.inner_steps < 1) throw InvalidSpec("defense.inner_steps must be >= 1");
  if (defense.epochs < 1) throw InvalidSpec("defense.epochs must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidSpec("config line " + std::to_string(lineno) + ": missing '='");
    std::string key = line.substr(0, eq);
    std::string v = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    auto vb = v.find_first_not_of(" \t");
    v = vb == std::string::npos ? "" : v.substr(vb);

    if (key == "seed") cfg.seed = parse_u64(v);
    else if (key == "dataset") cfg.dataset = v;
    else if (key == "splits.n_target_train") cfg.n_target_train = parse_u64(v);
    else if (key == "splits.n_target_test") cfg.n_target_test = parse_u64(v);
    else if (key == "splits.n_shadow_train") cfg.n_shadow_train = parse_u64(v);
    else if (key == "splits.n_shadow_test") cfg.n_shadow_test = parse_u64(v);
    else if (key == "splits.overlap_fraction") cfg.overlap_fraction = parse_double(v, key);
    else if (key == "model.style") cfg.style = parse_gate_style(v);
    else if (key == "model.gate_scope") cfg.gate_scope = parse_gate_scope(v);
    else if (key == "model.stem_stride") cfg.stem_stride = parse_int(v, key);
    else if (key == "model.widths") cfg.widths = parse_int_list(v, key);
    else if (key == "model.block_width") cfg.block_width = parse_int(v, key);
    else if (key == "model.n_blocks") cfg.n_blocks = parse_int(v, key);
    else if (key.rfind("train.", 0) == 0) apply_train_key(cfg.target_train, key.substr(6), v, key);
    else if (key == "shadow.mode") cfg.shadow_mode = parse_finetune_mode(v);
    else if (key.rfind("shadow.", 0) == 0) apply_train_key(cfg.shadow_train, key.substr(7), v, key);
    else if (key == "attack.variant") cfg.attack_variant = parse_attack_variant(v);
    else if (key == "attack.epochs") cfg.attack.epochs = parse_int(v, key);
    else if (key == "attack.lr") cfg.attack.lr = static_cast<float>(parse_double(v, key));
    else if (key == "attack.batch_size") cfg.attack.batch_size = parse_int(v, key);
    else if (key == "attack.softmax_inputs") cfg.attack.softmax_inputs = parse_bool(v, key);
    else if (key == "defense.enabled") cfg.defense_enabled = parse_bool(v, key);
    else if (key == "defense.lambda") cfg.defense.lambda = static_cast<float>(parse_double(v, key));
    else if (key == "defense.inner_steps") cfg.defense.inner_steps = parse_int(v, key);
    else if (key == "defense.epochs") cfg.defense.epochs = parse_int(v, key);
    else if (key == "defense.joint_epochs") cfg.defense.joint_epochs = parse_int(v, key);
    else if (key == "defense.fusion_adversary") cfg.defense.fusion_adversary = parse_bool(v, key);
    else throw InvalidSpec("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("config file not found: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(cfg.seed);
  kv["dataset"] = cfg.dataset;
  kv["splits.n_target_train"] = std::to_string(cfg.n_target_train);
  kv["splits.n_target_test"] = std::to_string(cfg.n_target_test);
  kv["splits.n_shadow_train"] = std::to_string(cfg.n_shadow_train);
  kv["splits.n_shadow_test"] = std::to_string(cfg.n_shadow_test);
  kv["splits.overlap_fraction"] = format_float(static_cast<float>(cfg.overlap_fraction));
  kv["model.style"] = gate_style_name(cfg.style);
  kv["model.gate_scope"] = gate_scope_name(cfg.gate_scope);
  kv["model.stem_stride"] = std::to_string(cfg.stem_stride);
  kv["model.widths"] = join_ints(cfg.widths);
  kv["model.block_width"] = std::to_string(cfg.block_width);
  kv["model.n_blocks"] = std::to_string(cfg.n_blocks);
  emit_train(kv, "train", cfg.target_train);
  kv["shadow.mode"] = finetune_mode_name(cfg.shadow_mode);
  emit_train(kv, "shadow", cfg.shadow_train);
  kv["attack.variant"] = attack_variant_name(cfg.attack_variant);
  kv["attack.epochs"] = std::to_string(cfg.attack.epochs);
  kv["attack.lr"] = format_float(cfg.attack.lr);
  kv["attack.batch_size"] = std::to_string(cfg.attack.batch_size);
  kv["attack.softmax_inputs"] = cfg.attack.softmax_inputs ? "true" : "false";
  kv["defense.enabled"] = cfg.defense_enabled ? "true" : "false";
  kv["defense.lambda"] = format_float(cfg.defense.lambda);
  kv["defense.inner_steps"] = std::to_string(cfg.defense.inner_steps);
  kv["defense.epochs"] = std::to_string(cfg.defense.epochs);
  kv["defense.joint_epochs"] = std::to_string(cfg.defense.joint_epochs);
  kv["defense.fusion_adversary"] = cfg.defense.fusion_adversary ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  uint64_t h = fnv1a64(canonical_text(cfg));
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xF];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

}  // namespace dynmia
