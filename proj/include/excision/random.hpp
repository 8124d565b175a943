#pragma once

#include <cstdint>
#include <random>

namespace excision {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; derives decorrelated child seeds from (seed, stream).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng{mix_seed(seed, stream)};
}

// Named streams so that each stage of a pipeline draws from its own sequence.
namespace stream {
inline constexpr std::uint64_t kGenerate = 1;
inline constexpr std::uint64_t kProcessNoise = 2;
inline constexpr std::uint64_t kMeasureNoise = 3;
inline constexpr std::uint64_t kHmm = 4;
inline constexpr std::uint64_t kDemo = 5;
inline constexpr std::uint64_t kExpert = 6;
}  // namespace stream

}  // namespace excision
