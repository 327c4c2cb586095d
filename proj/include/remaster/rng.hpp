#pragma once

#include <cstdint>
#include <random>

namespace remaster {

// Seedable random source. All draws are built from raw 64-bit engine output
// so that sequences do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for item `index` of a run seeded with `seed`.
  static Rng derive(std::uint64_t seed, std::uint64_t index) { return Rng(mix(seed, index)); }
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double log_uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace remaster
