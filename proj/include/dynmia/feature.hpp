#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynmia/dataset.hpp"
#include "dynmia/model.hpp"

namespace dynmia {

// Per-sample attack features. control_flow entries are strictly {0,1};
// only inference-mode binary gates are ever stored.
struct FeatureRecord {
  uint32_t sample_id = 0;
  std::vector<float> control_flow;
  std::vector<float> logits;  // pre-softmax
  std::optional<std::vector<float>> activation;
  std::optional<std::vector<float>> gradient;
  int membership = 0;

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureFile {
  std::string model_id;
  int gate_dim = 0;
  int num_classes = 0;
  bool with_activations = false;
  bool with_gradients = false;
  std::string fingerprint = "-";
  std::vector<FeatureRecord> records;

  bool operator==(const FeatureFile&) const = default;
};

struct ExtractFlags {
  bool with_gradients = false;
  bool with_activations = false;
};

// One record per index, all carrying membership_label. Gradients and
// activations come from the last convolution stage against true labels.
FeatureFile extract_features(DynamicNet& net, const Pool& pool, std::span<const uint32_t> indices,
                             int membership_label, ExtractFlags flags,
                             const std::string& model_id = "model");

// `dynmia-features v1` text format; lossless round trip, byte-stable.
void write_features(const FeatureFile& file, const std::string& path);
FeatureFile read_features(const std::string& path);

}  // namespace dynmia
