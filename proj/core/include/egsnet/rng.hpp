#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace egsnet {

// splitmix64 finalizer; good avalanche for seed derivation.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent seed for a named stream. Streams with different
// tags or indices never collide in practice.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
  return mix64(mix64(seed ^ hash_tag(tag)) ^ mix64(index + 0x51ed2701));
}

inline std::mt19937_64 make_stream(uint64_t seed, std::string_view tag, uint64_t index = 0) {
  return std::mt19937_64(derive_seed(seed, tag, index));
}

inline std::string rng_state_to_string(const std::mt19937_64& g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

inline void rng_state_from_string(std::mt19937_64& g, const std::string& s) {
  std::istringstream is(s);
  is >> g;
}

inline std::mt19937_64 rng_state_from_string(const std::string& s) {
  std::mt19937_64 g;
  rng_state_from_string(g, s);
  return g;
}

}  // namespace egsnet
