#pragma once

#include <cstdint>
#include <vector>

namespace hypertta {

// Deterministic 64-bit generator used project wide. Draws come from
// xoshiro256** (rotate/shift/multiply with constants 5, 7, 9, 17, 45);
// seeding and stream derivation use the SplitMix64 finalizer
// (0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9, 0x94D049BB133111EB).
// A stream is addressed by (seed, stream tag, lane): degradation
// operators use one lane per band, so per-band work can run on any
// thread schedule and still reproduce byte-identical output.
std::uint64_t splitmix64(std::uint64_t& state);

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);
  // Derived stream: hash of (seed, tag, lane).
  RngStream(std::uint64_t seed, std::uint32_t tag, std::uint32_t lane);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double next_double();
  // Uniform on (0, 1]; safe as a log() argument.
  double next_double_open0();
  // Uniform on [lo, hi).
  double next_uniform(double lo, double hi);
  // Uniform integer in [0, n); n >= 1. Multiply-shift bounding.
  std::uint64_t next_below(std::uint64_t n);
  // Uniform integer in [a, b); requires a < b.
  std::int64_t next_int_range(std::int64_t a, std::int64_t b);

  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double next_gaussian();

  // Poisson(lambda): sequential-search inversion for lambda < 30,
  // rounded N(lambda, lambda) clamped at 0 otherwise.
  std::int64_t next_poisson(double lambda);

  // k distinct values from {0..n-1} via partial Fisher-Yates, in draw order.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace hypertta
