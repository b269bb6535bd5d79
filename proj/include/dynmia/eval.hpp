#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dynmia {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

struct EvalReport {
  ConfusionCounts counts;
  int64_t n_members = 0, n_nonmembers = 0;
  double asr = 0;
  std::optional<double> precision;  // nullopt when TP+FP = 0
  double recall = 0;
  uint64_t seed = 0;
  std::string fingerprint = "-";
};

struct ScoredRecord {
  uint32_t sample_id = 0;
  float score = 0;
  int decision = 0;  // score >= 0.5
  int truth = 0;     // membership ground truth
};

// Equal-sized member/non-member selections: each side is a seeded
// shuffle, truncated to min(|members|, |nonmembers|).
std::pair<std::vector<uint32_t>, std::vector<uint32_t>> balanced_sample(
    std::span<const uint32_t> member_ids, std::span<const uint32_t> nonmember_ids, uint64_t seed);

// ASR = (TP+TN)/n, precision = TP/(TP+FP), recall = TP/(TP+FN).
// Requires balanced input (UnbalancedInput otherwise).
EvalReport compute_metrics(std::span<const ScoredRecord> scored);

// Tab-separated scored output: sample_id  score  decision  truth
void write_scores(std::span<const ScoredRecord> scored, const std::string& path);
std::vector<ScoredRecord> read_scores(const std::string& path);

// Flat `key=value` report file.
void write_report(const EvalReport& report, const std::string& path);
EvalReport read_report(const std::string& path);

// Aligned text table sorted by ASR descending; needs >= 2 reports.
std::string comparison_table(const std::vector<std::pair<std::string, EvalReport>>& reports);
// Deterministic SVG bar chart of the ASRs.
void write_comparison_svg(const std::vector<std::pair<std::string, EvalReport>>& reports,
                          const std::string& path);

}  // namespace dynmia
