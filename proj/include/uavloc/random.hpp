#pragma once

#include <cstdint>
#include <random>

namespace uavloc {

// splitmix64, used to derive well-separated engine seeds from a
// (base seed, stream id) pair so parallel trials never share a stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ stream));
}

}  // namespace uavloc
