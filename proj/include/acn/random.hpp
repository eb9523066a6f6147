#pragma once

#include <cstdint>
#include <random>

namespace acn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, stream). Every random draw in the project
/// derives from one root seed through this function; there is no global state.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

namespace streams {
inline constexpr std::uint64_t kFeatures = 1;
inline constexpr std::uint64_t kLabels = 2;
inline constexpr std::uint64_t kTruth = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kProbes = 5;
inline constexpr std::uint64_t kStart = 6;
}  // namespace streams

}  // namespace acn
