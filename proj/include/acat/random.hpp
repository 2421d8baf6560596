#pragma once

// Portable seeded randomness. A stream is identified by (seed, label):
//
//   state0 = seed XOR fnv1a64(label)
//   s[0..3] = four successive splitmix64(state0) outputs
//   next()  = xoshiro256** (Blackman & Vigna, 2018)
//
// uniform01 takes the top 53 bits; normals use the Marsaglia polar method.
// Only integer arithmetic feeds the raw stream, so it is bit-identical on
// every platform. Normals additionally depend on std::log/std::sqrt.

#include <cmath>
#include <cstdint>
#include <string_view>

#include "acat/errors.hpp"

namespace acat::sim {

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label) {
    std::uint64_t sm = seed ^ fnv1a64(label);
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], rejection-sampled to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InputError("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
    if (span == ~0ULL) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t n = span + 1;
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t x;
    do x = next_u64();
    while (x >= limit);
    return lo + static_cast<std::int64_t>(x % n);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Standard normal conditioned on |z| <= limit.
  double normal_truncated(double limit) {
    if (!(limit > 0)) return 0.0;
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= limit) return z;
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RandomStream random_stream(std::uint64_t seed, std::string_view label) { return {seed, label}; }

}  // namespace acat::sim
