#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace cavsqz {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Stream splitting: a stream is addressed by (master_seed, trial_id, step).
// The 64-bit master seed becomes the 2x32 key; the counter words are
//   ctr[0] = block index (incremented every 4 outputs)
//   ctr[1] = step index
//   ctr[2] = low 32 bits of trial_id
//   ctr[3] = high 32 bits of trial_id
// so every (trial, step) pair owns a disjoint 2^32-block sequence and the
// values a trial consumes never depend on scheduling.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t master_seed, std::uint64_t trial_id, std::uint32_t step = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Raw block function, exposed for known-answer tests.
  static Counter block(Counter ctr, Key key);

  std::uint64_t master_seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Key key_;
  Counter ctr_;
  Counter buffer_{};
  int used_ = 4;
};

// Reserved step indices for streams that are not tied to a sequence step.
namespace stream {
inline constexpr std::uint32_t kAtomNumber = 0xA7000000u;
inline constexpr std::uint32_t kReadout = 0xA7000001u;
inline constexpr std::uint32_t kBootstrap = 0xB0000000u;
}  // namespace stream

}  // namespace cavsqz
