#pragma once

#include <cmath>
#include <cstdint>

namespace ssp {

// splitmix64. Standard-library distributions are implementation-defined,
// so every random draw in this project goes through this generator to keep
// outputs bit-reproducible across toolchains.
struct Rng {
  uint64_t state = 0x9e3779b97f4a7c15ull;

  Rng() = default;
  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // integer in [0, n)
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Box-Muller without caching, so the draw count per call is fixed.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    double mag = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * mag * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  bool coin() { return (next_u64() & 1ull) != 0; }
};

// Stream derivation: children of one seed stay decorrelated by tag.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace ssp
