#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dynmia {

// Merged train+test pool, indexed by the partition lists. Pixels are
// uint8 CHW per sample; training code normalizes to [0,1] on the fly.
struct Pool {
  std::string name;
  int num_classes = 0;
  int channels = 3;
  int height = 32;
  int width = 32;
  std::vector<uint8_t> pixels;  // size() * channels * height * width
  std::vector<int32_t> labels;

  size_t size() const { return labels.size(); }
  size_t sample_bytes() const { return static_cast<size_t>(channels) * height * width; }
  const uint8_t* sample(size_t i) const { return pixels.data() + i * sample_bytes(); }
};

struct SyntheticParams {
  int num_classes = 2;
  size_t n = 2000;
  uint64_t seed = 0;
  // Class-conditional smooth blob signal vs per-sample nuisance blobs and
  // pixel noise. Defaults give a task hard enough that a small net
  // memorizing a 2k-sample train split keeps a visible train/test gap.
  float class_amp = 34.f;
  float nuisance_amp = 52.f;
  float noise_std = 26.f;
};

// 32x32 3-channel Gaussian-blob images with class-conditional means.
Pool make_synthetic(const SyntheticParams& params);

// Supported names: "synthetic-2class", "synthetic-10class", "cifar10",
// "cifar100", "stl10" (downsampled to 32x32), "gtsrb"
// (root/gtsrb/<split>/<class_id>/*.ppm, resized to 32x32).
// Real datasets are read from `root`; throws DatasetNotFound when files
// are absent and CorruptData when sizes/labels are inconsistent.
Pool load_pool(const std::string& dataset_name, const std::string& root);

}  // namespace dynmia
