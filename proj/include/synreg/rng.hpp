#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace synreg {

using Rng = std::mt19937_64;

/// Independent generator for a (seed, tag...) path, e.g. (seed, frame, attempt).
/// Results never depend on the order in which substreams are created, so
/// parallel consumers stay reproducible.
inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// A 64-bit seed derived from a path; used to hand child seeds to subsystems.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return substream(seed, path)();
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace synreg
