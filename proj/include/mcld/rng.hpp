#pragma once

#include <cstdint>
#include <random>

namespace mcld {

/// Seeded random stream. The same (seed, stream) pair reproduces identical
/// draws on one platform; there is no global generator anywhere in the library.
class RngHandle {
 public:
  RngHandle(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(mix(seed, stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream; does not advance this handle.
  RngHandle derive(std::uint64_t sub) const {
    return RngHandle(mix(seed_, stream_), sub);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  // splitmix64 finalizer over the pair.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace mcld
