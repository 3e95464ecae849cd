#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace perfest {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stable per-component seed: the same (seed, parts...) always yields the
// same value, independent of platform and call order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  std::uint64_t h = splitmix64(seed);
  for (auto p : parts) {
    h = splitmix64(h ^ fnv1a(p));
    h = splitmix64(h ^ p.size());
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  return derive_seed(seed, {component});
}

}  // namespace perfest
