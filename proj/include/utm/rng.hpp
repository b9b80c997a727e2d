#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace utm {

/// Deterministic random stream. mt19937_64 with hand-rolled value transforms
/// so sequences are bit-identical across standard libraries (std::*_distribution
/// is implementation-defined and would break run-to-run reproducibility between
/// toolchains).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), state_hash_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi] inclusive. Unbiased via rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  /// Standard normal via Box-Muller (one value per call; cached pair unused to
  /// keep the draw count predictable).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Child stream decorrelated from this one and from other tags. splitmix64
  /// finalizer over (seed-derived state, tag).
  Rng split(std::uint64_t tag) const {
    std::uint64_t z = state_hash_ + (tag + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z = z ^ (z >> 31);
    return Rng(z, /*hash=*/z);
  }

  static Rng seeded(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z = z ^ (z >> 31);
    return Rng(z, z);
  }

 private:
  Rng(std::uint64_t seed, std::uint64_t hash) : engine_(seed), state_hash_(hash) {}

  std::mt19937_64 engine_;
  std::uint64_t state_hash_ = 0;
};

}  // namespace utm
