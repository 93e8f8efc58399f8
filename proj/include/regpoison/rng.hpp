#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "regpoison/errors.hpp"

namespace regpoison {

// splitmix64 step; used to derive independent stream seeds from a base seed
// so that per-cell results do not depend on scheduling order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

// First k entries of a seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<Eigen::Index> sample_without_replacement(
    Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  if (k > n || k < 0) {
    throw ConfigError("sample_without_replacement: k = " + std::to_string(k) +
                      " out of range for n = " + std::to_string(n));
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index n,
                                                  std::mt19937_64& rng) {
  return sample_without_replacement(n, n, rng);
}

}  // namespace regpoison
