// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace infinet {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed splitting: stream k of a base seed. Used to derive per-view, per-epoch
// and per-worker seeds so that independent consumers never share a stream.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 1));
}

// mt19937_64 core with explicit transforms. The engine is standardized; the
// std distributions are not, so we supply our own to keep bit-level
// reproducibility independent of the standard library build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no spare caching.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // [0, n), n > 0. Multiply-shift keeps bias negligible for test-scale n.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<__uint128_t>(eng_()) * static_cast<__uint128_t>(n)) >> 64);
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto count = static_cast<int64_t>(last - first);
    for (int64_t i = count - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace infinet
