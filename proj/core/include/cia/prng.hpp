#pragma once

#include <cmath>
#include <cstdint>

namespace cia {

/// splitmix64: tiny, fast, identical output on every platform. All seeded
/// behavior in this project (weight init, dataset synthesis, target picks,
/// shuffles) goes through this generator so runs reproduce bit-for-bit.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [0, n) by rejection-free modulo of a 64-bit draw; bias is
  /// negligible for the small n used here (n <= a few thousand).
  uint64_t below(uint64_t n) { return next() % n; }

  /// Standard normal via Box-Muller (one value per call; no cached spare, so
  /// the stream position is a pure function of call count).
  double next_gaussian() {
    // u in (0,1] so log() is finite
    double u = 1.0 - next_unit();
    double v = next_unit();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * v);
  }

  uint64_t state() const { return state_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  uint64_t state_;
};

/// Decorrelated child seed for stream `index` of a master seed. Used to give
/// every sample / model / shuffle its own independent generator.
inline uint64_t substream_seed(uint64_t seed, uint64_t index) {
  SplitMix64 g(seed ^ (0xD1342543DE82EF95ULL * (index + 1)));
  return g.next();
}

}  // namespace cia
