#pragma once

#include <cstdint>
#include <random>

namespace rgflow {

/// SplitMix64 finalizer; decorrelates nearby seeds such as master_seed + i.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(mix_seed(seed)); }

/// Independent stream for a named purpose derived from one seed.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return Engine(mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace rgflow
