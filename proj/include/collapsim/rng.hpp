#pragma once

#include <cstdint>

namespace collapsim {

// All stochastic sampling in this project goes through this generator so that
// results are bit-identical across platforms, compilers, and thread counts.
// Standard-library distributions are deliberately avoided: their output is
// implementation-defined.

// splitmix64 step: advances `state` and returns a scrambled 64-bit value.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// xoshiro256** seeded from a (master seed, stream id) pair. Stream i's output
// is a pure function of (master_seed, i): trajectory substreams never depend
// on execution order or worker count.
class Rng {
 public:
  Rng() : Rng(0, 0) {}

  Rng(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t s =
        master_seed ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1));
    s ^= stream_id << 32 | (stream_id >> 32);
    bool all_zero = true;
    for (auto& w : state_) {
      w = splitmix64_next(s);
      all_zero = all_zero && w == 0;
    }
    if (all_zero) state_[0] = 1;  // xoshiro forbids the all-zero state
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] ^= rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1): 53-bit mantissa, reproducible everywhere.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1]: safe argument for log().
  double u01_positive() { return 1.0 - u01(); }

  // Uniform integer in [0, n). Uses 128-bit multiply; the O(2^-64) range bias
  // is far below anything observable and keeps the draw count fixed.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

}  // namespace collapsim
