#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace reachlab {

/// Mixes a list of integers into one 64-bit seed (splitmix64 chain).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// Seeded random source. Owned by exactly one caller; never shared between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) from the top 53 bits of one draw.
  double canonical() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi]; returns lo when the interval is degenerate.
  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace reachlab
