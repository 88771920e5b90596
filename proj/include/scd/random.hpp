#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace scd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent sub-stream seed for a named purpose. Stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return splitmix64(base ^ splitmix64(fnv1a(tag)));
}

/// Uniform draw in [0, 1).
inline double uniform01(Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return u < 1.0 ? u : std::nextafter(1.0, 0.0);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace scd
