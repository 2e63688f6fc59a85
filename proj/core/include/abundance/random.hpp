#pragma once

#include <cstdint>
#include <random>

namespace abundance {

/// Engine used everywhere randomness is drawn. The standard fixes its output
/// sequence, and the distributions used with it come from Boost.Random, so
/// draws are reproducible across platforms.
using Engine = std::mt19937_64;

/// SplitMix64 finaliser; decorrelates nearby integer seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the independent stream `index` derived from `master`.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t master, std::uint64_t index) {
  return Engine(stream_seed(master, index));
}

}  // namespace abundance
