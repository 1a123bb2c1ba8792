#pragma once
// Deterministic RNG. splitmix64 core with hand-rolled uniform / normal draws so
// streams are bit-stable everywhere (std distributions are implementation-defined).

#include <cmath>
#include <cstdint>

namespace tcv {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream seed for a substream (per-slide, per-record, ...).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  uint64_t s = base ^ (0x2545f4914f6cdd1dull * (stream + 1));
  return splitmix64(s);
}

class rng {
 public:
  explicit rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1): 53 mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller. Two fresh uniforms per draw, no cached spare,
  // so the stream position is a pure function of the draw count.
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  uint64_t state_;
};

}  // namespace tcv
