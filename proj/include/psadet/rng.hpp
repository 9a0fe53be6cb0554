#pragma once

// Seeded random source with platform-independent transforms. The engine's
// output sequence is fixed by the standard; the std distributions are not, so
// uniform/normal/Poisson/shuffle are implemented here.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace psadet {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (the spare value is discarded).
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Poisson by inversion, splitting large means into chunks so exp(-mean)
  /// never underflows.
  std::uint64_t poisson(double mean) {
    constexpr double kChunk = 256.0;
    std::uint64_t total = 0;
    while (mean > 0.0) {
      const double m = mean > kChunk ? kChunk : mean;
      mean -= m;
      const double limit = std::exp(-m);
      double prod = uniform();
      while (prod > limit) {
        ++total;
        prod *= uniform();
      }
    }
    return total;
  }

  template <typename T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace psadet
