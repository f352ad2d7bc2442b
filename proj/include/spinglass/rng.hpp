#pragma once

#include <cstdint>
#include <random>

namespace spinglass {

// splitmix64 finaliser; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t task) {
  return mix64(mix64(seed) ^ mix64(task + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t task, std::uint64_t sub) {
  return stream_seed(stream_seed(seed, task), sub);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t task) { return Rng(stream_seed(seed, task)); }

}  // namespace spinglass
