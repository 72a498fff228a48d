#pragma once

// Deterministic random number generation.
//
// Generator: xoshiro256** seeded through SplitMix64.  Identical seeds give
// bit-identical sequences on every platform; nothing here depends on
// std::random_device or on libstdc++ distribution internals.
//
// Stream derivation: independent streams are named, not split by convention.
// derive_seed(base, tag, index) = mix64(mix64(base ^ fnv1a64(tag)) ^ index),
// so scene i of a run with seed S uses Rng(derive_seed(S, "suite", i)) and a
// training run uses Rng(derive_seed(S, "train", i)).  Changing any of the
// three inputs changes the whole stream.

#include <cstdint>
#include <cmath>
#include <numbers>
#include <string_view>

namespace irstd {

inline constexpr const char* kRngId = "splitmix64+xoshiro256ss/boxmuller/v1";

// SplitMix64 finalizer used as a stateless 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a over the bytes of a stream tag.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  return mix64(mix64(base ^ fnv1a64(tag)) ^ index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // SplitMix64 expansion of the seed into the xoshiro state; the state is
    // never all-zero because mix64 of consecutive counters cannot collide to
    // four zeros.
    std::uint64_t sm = seed;
    for (auto& w : state_) {
      sm += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      w = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], both ends inclusive.
  int uniform_int(int lo, int hi) {
    const double u = uniform();
    int v = lo + int(u * (double(hi) - double(lo) + 1.0));
    return v > hi ? hi : v;
  }

  // Standard normal via Box-Muller; the paired deviate is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace irstd
