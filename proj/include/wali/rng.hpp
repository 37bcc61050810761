// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace wali {

// FNV-1a, used to derive per-purpose seeds from a base seed and a label
// (file name, parameter name, ...). Stable across platforms and library
// versions, unlike std::hash<std::string>.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named splittable seed derivation: independent streams per (seed, label).
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
  return splitmix64(base ^ fnv1a64(label));
}

inline std::mt19937_64 make_rng(uint64_t base, std::string_view label) {
  return std::mt19937_64(derive_seed(base, label));
}

// Uniform in [0, 1) from raw engine output. std::uniform_real_distribution is
// implementation-defined; this mapping is not.
inline double uniform01(std::mt19937_64& g) {
  return double(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Marsaglia polar method; deterministic given the engine state.
inline double gaussian(std::mt19937_64& g) {
  for (;;) {
    double u = 2.0 * uniform01(g) - 1.0;
    double v = 2.0 * uniform01(g) - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

}  // namespace wali
