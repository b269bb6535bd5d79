#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "dynmia/config.hpp"
#include "dynmia/eval.hpp"

namespace dynmia {

// Orchestrates the experiment stages over an output directory. Every
// artifact carries the config fingerprint; a stage refuses to consume
// artifacts written under a different config. Completed stages are
// skipped unless `force` is set.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::string out_dir, std::string data_root, bool force = false,
           std::ostream* log = nullptr);

  const std::string& fingerprint() const { return fingerprint_; }
  const std::string& out_dir() const { return out_dir_; }

  // Artifact paths.
  std::string splits_path() const;
  std::string model_path(const std::string& model_id) const;   // <id>.ckpt
  std::string features_path(const std::string& model_id, const std::string& part) const;
  std::string attack_path(const std::string& attack_id) const;
  std::string scores_path(const std::string& attack_id) const;
  std::string report_path(const std::string& attack_id) const;
  std::string log_path(const std::string& stage) const;

  // Stages. Each validates its inputs (MissingArtifact names the stage
  // that must run first; ConfigFingerprintMismatch on cross-config mixes).
  void prepare();
  void train_target();
  void run_shadow();           // fine-tuned shadow per cfg.shadow_mode
  void run_baseline_shadow();  // shadow trained from scratch (baseline)
  void run_defense();          // adversarially regularized target
  // Feature extraction for a trained model over its member/non-member
  // splits: "shadow"/"baseline-shadow" use the shadow partitions (attack
  // training data); "target"/"defended" use the target partitions
  // (attack evaluation data).
  void extract(const std::string& model_id);
  // attack_id: "fusion" | "logits-only" | "gradient" | "activation"
  // | "baseline" | "defended". Trains on the appropriate shadow features.
  void run_attack(const std::string& attack_id);
  // Scores the appropriate target features, balanced; writes scores,
  // report, and returns the metrics.
  EvalReport run_eval(const std::string& attack_id);

  // Full Algorithm-1 run: main attack + baseline (+ defense chain when
  // enabled), comparison table + SVG, one RESULT line per report on
  // `summary`. Returns the reports keyed by attack id.
  std::map<std::string, EvalReport> run_all(std::ostream& summary);

  // Accuracy of a stored model over the target splits.
  std::pair<float, float> model_accuracy(const std::string& model_id);

 private:
  void require(const std::string& path, const std::string& producer_stage) const;
  void check_fingerprint(const std::string& found, const std::string& path) const;
  bool done(const std::string& path) const;  // exists and not forced
  void note(const std::string& msg) const;

  ExperimentConfig cfg_;
  std::string out_dir_, data_root_, fingerprint_;
  bool force_;
  std::ostream* log_;
};

// Scoped lock file; throws Error if already held.
class RunLock {
 public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

}  // namespace dynmia
