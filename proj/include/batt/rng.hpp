#pragma once

#include <cstdint>
#include <string_view>

#include "batt/checksum.hpp"

namespace batt {

// Counter-based pseudorandom stream keyed by (master seed, purpose tag,
// sample index). Distinct keys give statistically independent streams and the
// same key replays the same sequence on every platform, which is what makes
// per-sample poisoning decisions independent of worker scheduling.
class RngStream {
 public:
  RngStream(uint64_t master_seed, std::string_view purpose, uint64_t index = 0) {
    uint64_t key = master_seed;
    key = split_mix(key ^ fnv1a64(purpose));
    key = split_mix(key ^ (index * 0x9e3779b97f4a7c15ull));
    state_ = key;
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return finalize(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform continuous draw in [low, high].
  double uniform_real(double low, double high) {
    return low + next_unit() * (high - low);
  }

  // Uniform integer draw in [low, high], inclusive, rejection-sampled so the
  // distribution is exact for any range.
  int64_t uniform_int(int64_t low, int64_t high) {
    const uint64_t range = static_cast<uint64_t>(high - low) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit span
    const uint64_t limit = (~uint64_t{0} / range) * range;
    uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return low + static_cast<int64_t>(draw % range);
  }

  // Standard normal via Box-Muller; consumes two draws.
  double next_gaussian();

 private:
  static uint64_t split_mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    return finalize(x);
  }

  // SplitMix64 output mix.
  static uint64_t finalize(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace batt
