#pragma once

#include <cstdint>

namespace ragrl {

// FNV-1a, 64-bit. Stable across platforms; used for context-window keys.
inline uint64_t fnv1a_init() { return 14695981039346656037ULL; }

inline uint64_t fnv1a_u64(uint64_t h, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (i * 8)) & 0xFFu;
    h *= 1099511628211ULL;
  }
  return h;
}

// splitmix64 step; the usual seed-expansion generator.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic substream seed from (run seed, step, episode index).
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t s = seed;
  uint64_t x = splitmix64(s);
  s ^= a * 0xD1342543DE82EF95ULL;
  x ^= splitmix64(s);
  s ^= b * 0xAF251AF3B0F025B5ULL;
  x ^= splitmix64(s);
  return x;
}

}  // namespace ragrl
