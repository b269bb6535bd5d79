#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynmia/model.hpp"
#include "dynmia/nn.hpp"

namespace dynmia {

// `dynmia-ckpt v1` container: text header fields, then named float
// tensors (text size line + raw little-endian data each).
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, Mat>> tensors;

  const std::string* find(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws CorruptRecord
  void set(const std::string& key, std::string value) { fields.emplace_back(key, std::move(value)); }
  const Mat& tensor(const std::string& name) const;
};

// Writes are atomic (temp file + rename).
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// DynamicNet <-> checkpoint. extra fields (fingerprint, defended, ...) are
// carried verbatim.
Checkpoint model_to_checkpoint(DynamicNet& net, const std::string& model_id);
std::unique_ptr<DynamicNet> model_from_checkpoint(const Checkpoint& ckpt);

void save_model(DynamicNet& net, const std::string& model_id,
                const std::vector<std::pair<std::string, std::string>>& extra_fields,
                const std::string& path);
std::unique_ptr<DynamicNet> load_model(const std::string& path, Checkpoint* header = nullptr);

}  // namespace dynmia
