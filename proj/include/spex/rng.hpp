#pragma once

#include <cmath>
#include <cstdint>

#include "spex/stats.hpp"

namespace spex {

// Counter-based generator: draw i of a stream is a pure function of
// (seed, i), so parallel consumers can pull disjoint index ranges without
// sharing state and results do not depend on scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t bits(std::uint64_t i) const {
    return mix(seed_ + (i + 1) * 0x9E3779B97F4A7C15ull);
  }

  /// Uniform draw in the open interval (0,1).
  double uniform(std::uint64_t i) const {
    return (static_cast<double>(bits(i) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via inverse cdf; exact function of (seed, i).
  double normal(std::uint64_t i) const { return norm_quantile(uniform(i)); }

  /// Derive an independent stream keyed by `tag`.
  CounterRng substream(std::uint64_t tag) const {
    return CounterRng(mix(seed_ ^ mix(tag ^ 0xA5A5A5A5A5A5A5A5ull)));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Sequential adapter over a CounterRng stream for draws whose count per
// variate is itself random (rejection loops). Each consumer should own a
// distinct substream.
class RngStream {
 public:
  explicit RngStream(CounterRng rng) : rng_(rng) {}

  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(next_++); }

  /// Gamma(shape, scale=1) via Marsaglia-Tsang squeeze.
  double gamma(double shape);

  /// Pareto draw with survival u^{-alpha}: P(X > x) = x^{-alpha}, x >= 1.
  double pareto(double alpha) {
    // uniform() never returns 0 or 1, so both log and pow are safe.
    return std::pow(uniform(), -1.0 / alpha);
  }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace spex
