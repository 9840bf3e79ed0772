#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace polymerlab {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
/// Stateless: the output is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) noexcept;
};

/// SplitMix64 finalizer; used only for deriving keys of auxiliary streams.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Map two 32-bit words to a double in (0, 1) on a grid of spacing 2^-52.
/// Never returns 0 or 1, so it is safe to feed into quantile functions.
double open_unit(std::uint32_t hi, std::uint32_t lo) noexcept;

/// Inverse of the standard normal CDF, Wichura's AS241 (PPND16).
/// Relative accuracy about 1e-16 on (0, 1).
double normal_quantile(double p) noexcept;

/// Deterministic random stream keyed by (seed, stream id). Satisfies
/// UniformRandomBitGenerator; each Philox block yields two 64-bit outputs.
/// Copying the object copies the position, so `auto a = rng; a(); rng();`
/// returns the same value twice.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Uniform double in (0, 1).
  double uniform() noexcept;

  std::uint64_t position() const noexcept { return position_; }

 private:
  Philox4x32::Key key_{};
  std::uint64_t stream_ = 0;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
};

}  // namespace polymerlab
