// Deterministic RNG with bit-stable sampling. std:: distributions are
// implementation-defined across standard libraries, which would break the
// "same seed, same artifact" contract, so every draw is built directly on a
// splitmix64 stream.
#pragma once

#include <cmath>
#include <cstdint>

namespace vsr {

class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0,1) from the top 53 bits
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // inclusive bounds; modulo bias is negligible for the spans used here
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + int64_t(next_u64() % uint64_t(hi - lo + 1));
  }

  // Box-Muller without a cached spare so the state stays a single u64
  double normal() {
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  // hash-combine for deriving decorrelated substreams from one root seed
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

private:
  uint64_t state_;
};

}  // namespace vsr
