#pragma once

#include <cstdint>

namespace bqrnn {

namespace detail {

// Stafford mix 13 finalizer, the same bijection SplitMix64 uses.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-style generator in the SplittableRandom family: the state walks an
// arithmetic sequence with a per-stream odd increment and every output is a
// mixed copy of the state. Distinct (seed, stream_id) pairs give streams that
// can be consumed concurrently without sharing state, which keeps chain
// launches reproducible regardless of scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    state_ = detail::mix64(seed + 0x9e3779b97f4a7c15ULL * stream_id);
    gamma_ = detail::mix64(stream_id ^ 0xd1342543de82ef95ULL) | 1ULL;
  }

  std::uint64_t next_u64() {
    state_ += gamma_;
    return detail::mix64(state_);
  }

  // Uniform draw strictly inside (0,1); safe to hand to log().
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) by 128-bit multiply-shift.
  std::uint64_t next_below(std::uint64_t bound) {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_;
  std::uint64_t gamma_;
};

}  // namespace bqrnn
