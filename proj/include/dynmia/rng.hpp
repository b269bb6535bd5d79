#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dynmia {

// 64-bit FNV-1a. Used for seed fan-out and config fingerprints.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Derive a per-stage seed from the experiment's global seed, so each
// stage is reproducible in isolation.
inline uint64_t stage_seed(uint64_t global_seed, std::string_view stage_tag) {
  return global_seed ^ fnv1a64(stage_tag);
}

// All randomness in the library flows through this engine.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  std::mt19937_64& engine() { return eng_; }

  float normal(float mean = 0.f, float stddev = 1.f) {
    std::normal_distribution<float> d(mean, stddev);
    return d(eng_);
  }
  float uniform(float lo = 0.f, float hi = 1.f) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(eng_);
  }
  // Uniform integer in [0, n).
  size_t index(size_t n) {
    std::uniform_int_distribution<size_t> d(0, n - 1);
    return d(eng_);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dynmia
