#pragma once

// Seeding and uniform sampling used everywhere randomness appears.  Both the
// bit-mix and the [0,1) mapping are spelled out here so that every platform
// draws identical sequences (std::uniform_real_distribution is not portable
// across standard libraries).

#include <cstdint>
#include <random>

namespace coenv {

/// SplitMix64 finalizer; good avalanche behaviour for combining seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-trial engine seed: hash of (session seed, trial index).
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial) {
  return splitmix64(splitmix64(seed) ^ splitmix64(trial + 0x51ed2701ULL));
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace coenv
