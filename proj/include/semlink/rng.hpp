// Counter-based random streams. Every (seed, stream) pair is an independent
// sequence; identical pairs reproduce identical scalars on every platform,
// which is what makes noise draws, init, and shuffling order-independent
// across experiment layouts.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace semlink {

// Well-known stream ids, kept apart so that e.g. channel noise never
// disturbs parameter init when configs change.
namespace streams {
inline constexpr std::uint64_t kParamInit = 1;
inline constexpr std::uint64_t kChannelNoise = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kPilot = 4;
inline constexpr std::uint64_t kToyData = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kEmulator = 7;
}  // namespace streams

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), counter_(0), has_cached_(false), cached_(0.0) {
    base_ = mix(seed_ + 0x9E3779B97F4A7C15ULL * mix(stream_ + 0x632BE59BD9B4E019ULL));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // SplitMix64 finalizer over a per-call counter.
  std::uint64_t next_u64() {
    std::uint64_t z = base_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    return mix(z);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the pair partner is cached so one draw
  // consumes one value on average.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Normal truncated to +/- 2 stddev (resampled), times stddev.
  double truncated_normal(double stddev) {
    double z = normal();
    while (z < -2.0 || z > 2.0) z = normal();
    return z * stddev;
  }

  // Derive an independent stream without touching this one's counter.
  RngStream substream(std::uint64_t salt) const {
    return RngStream(seed_, mix(stream_ + 0xD1B54A32D192ED03ULL * (salt + 1)));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t base_;
  std::uint64_t counter_;
  bool has_cached_;
  double cached_;
};

}  // namespace semlink
