#pragma once

#include "ldiff/types.hpp"

#include <cstdint>

namespace ldiff {

/// Child seed for stream `index` of a master seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_stream(std::uint64_t master, std::uint64_t index) { return Rng(derive_seed(master, index)); }

inline Vec standard_normal(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = n01(rng);
  return z;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ldiff
