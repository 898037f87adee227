#pragma once

#include <cstdint>
#include <random>

namespace dfn {

/// Deterministic random stream. Streams derived from the same seed but
/// different stream ids are independent, which keeps data generators
/// stateless functions of (seed, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : Rng(seed, 0) {}
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(mix(mix(seed) ^ mix(stream + 0x9e3779b97f4a7c15ull))) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  /// Inclusive on both ends.
  long long uniform_int(long long lo, long long hi) {
    return std::uniform_int_distribution<long long>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * norm01_(engine_);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> norm01_{0.0, 1.0};
};

}  // namespace dfn
