#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace emf {

/// PCG32 (XSH-RR output, 64-bit LCG state), as in O'Neill's reference
/// pcg32_random_r. Seeding follows pcg32_srandom_r(initstate, initseq).
/// Reference vector: Pcg32(42, 54) yields 0xa15c02b7, 0x7b47f409, 0xba1d3330.
///
/// Derived streams, all built on next_u32():
///   next_u64      = (hi << 32) | lo, two consecutive draws, hi first
///   uniform       = (next_u64 >> 11) * 2^-53, in [0, 1)
///   bounded(n)    = rejection of next_u64 below (2^64 mod n), then mod n
///   normal        = Box-Muller pairs: u1 = 1 - uniform, u2 = uniform,
///                   z0 = sqrt(-2 ln u1) cos(2 pi u2) returned first,
///                   z1 = sqrt(-2 ln u1) sin(2 pi u2) cached for the next call
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0) noexcept {
    state_ = 0;
    inc_ = (stream << 1U) | 1U;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() noexcept {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18U) ^ old) >> 27U);
    const auto rot = static_cast<std::uint32_t>(old >> 59U);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31U));
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32U) | lo;
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11U) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v >= threshold) return v % n;
    }
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream identifiers, so one user seed drives independent generators.
namespace streams {
inline constexpr std::uint64_t kFactors = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kMask = 3;
inline constexpr std::uint64_t kMeasurements = 4;
inline constexpr std::uint64_t kSvdInit = 5;
inline constexpr std::uint64_t kSplit = 6;
}  // namespace streams

}  // namespace emf
