#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace dual {

/// Explicit, seedable random stream threaded through every stochastic call.
using Rng = std::mt19937_64;

inline std::size_t uniform_index(Rng &rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng &rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Derives an independent stream from a parent seed and a salt.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return Rng(seq);
}

}  // namespace dual
