#pragma once
// Owned deterministic RNG: splitmix64 streams plus Box-Muller normals.
// Everything that draws randomness in the engine goes through this so a single
// master seed pins every run bit-for-bit on a given build (libstdc++
// distributions are implementation-defined and would tie determinism to the
// standard library version).

#include <cstdint>
#include <cmath>
#include <string_view>

namespace tkg {

struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0,1], safe as a log() argument
  double next_double_open() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  double next_normal() {
    // Box-Muller; the second deviate is deliberately discarded to keep the
    // stream position a pure function of the draw count.
    double u1 = next_double_open();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

// FNV-1a, used to key per-entity and per-component streams off stable names.
inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Mixes a master seed with a component tag so sub-streams are independent.
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  uint64_t z = master ^ (0x9e3779b97f4a7c15ull + fnv1a64(tag));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

} // namespace tkg
