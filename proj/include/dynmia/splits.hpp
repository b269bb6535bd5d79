#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dynmia {

// The four-way partition request. overlap_fraction is the fraction of
// shadow_train drawn from target_train; it never touches the test sets.
struct SplitSpec {
  std::string dataset_name;
  uint64_t seed = 0;
  size_t n_target_train = 1;
  size_t n_target_test = 1;
  size_t n_shadow_train = 1;
  size_t n_shadow_test = 1;
  double overlap_fraction = 0.0;
};

// Ordered index lists into the pooled (train+test merged) dataset.
// target_train indices are members; target_test indices are non-members.
struct DataPartitions {
  std::vector<uint32_t> target_train;
  std::vector<uint32_t> target_test;
  std::vector<uint32_t> shadow_train;
  std::vector<uint32_t> shadow_test;
};

// Number of pool indices the spec consumes (overlap counted once).
size_t required_budget(const SplitSpec& spec);

// Deterministic for a fixed spec. Test partitions are kept disjoint from
// both train partitions; the only permitted intersection is the requested
// target_train/shadow_train overlap, whose size is exact:
// round(overlap_fraction * n_shadow_train).
DataPartitions make_partitions(const SplitSpec& spec, size_t pool_size);

// Text manifest, byte-identical across platforms for a fixed spec.
// Format: header "dynmia-splits v1", then one line per partition:
//   <name> <seed> <comma-separated indices>
void write_manifest(const DataPartitions& parts, uint64_t seed, const std::string& path);

struct SplitManifest {
  uint64_t seed = 0;
  DataPartitions parts;
};
SplitManifest read_manifest(const std::string& path);

}  // namespace dynmia
