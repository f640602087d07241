#pragma once

// Counter-based random numbers. Every variate is a pure function of
// (seed, counter), so paths, levels and steps can be generated in any order
// and on any thread without changing the values.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace degsde::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
inline Counter philox4x32_10(Counter ctr, Key key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline Key key_from_seed(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

/// SplitMix64 finalizer; used to fold arbitrary 64-bit labels into counters.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Uniform in (0, 1], 53 bits.
inline double u01_open_low(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Uniform in [0, 1), 53 bits.
inline double u01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::pair<double, double> box_muller(double u1, double u2) {
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

/// Reserved top byte of counter word 1 for non-Brownian streams.
enum class Stream : std::uint32_t {
  Brownian = 0,  // levels 0..239 occupy this range
  SliceRotation = 240,
  ModulusPairs = 241,
  GrowthDirections = 242,
  BandSamples = 243,
};

inline constexpr std::uint32_t kMaxBrownianLevel = 239;

/// Standard normals for one Brownian step: coordinates `out[0..n)` of
/// (path, level, step). Pairs of coordinates share one Philox block.
inline void gaussians(std::uint64_t seed, std::uint64_t path, std::uint32_t level, std::uint32_t step,
                      std::span<double> out) {
  const Key key = key_from_seed(seed);
  for (std::size_t j = 0; j < out.size(); j += 2) {
    const auto pair = static_cast<std::uint32_t>(j / 2);
    const Counter ctr{step, (level << 24) | (pair & 0xFFFFFFu), static_cast<std::uint32_t>(path),
                      static_cast<std::uint32_t>(path >> 32)};
    const Counter r = philox4x32_10(ctr, key);
    const auto [z0, z1] = box_muller(u01_open_low(r[0], r[1]), u01(r[2], r[3]));
    out[j] = z0;
    if (j + 1 < out.size()) out[j + 1] = z1;
  }
}

/// Two uniforms in [0,1) for an auxiliary stream addressed by (tag, a, b).
inline std::pair<double, double> uniforms(std::uint64_t seed, Stream tag, std::uint64_t a, std::uint32_t b) {
  const Counter ctr{static_cast<std::uint32_t>(a), (static_cast<std::uint32_t>(tag) << 24) | (b & 0xFFFFFFu),
                    static_cast<std::uint32_t>(a >> 32), 0x5EEDu};
  const Counter r = philox4x32_10(ctr, key_from_seed(seed));
  return {u01(r[0], r[1]), u01(r[2], r[3])};
}

/// Van der Corput radical inverse in the given prime base.
inline double radical_inverse(std::uint64_t index, std::uint32_t base) {
  double inv_base = 1.0 / base;
  double factor = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += static_cast<double>(index % base) * factor;
    index /= base;
    factor *= inv_base;
  }
  return result;
}

inline constexpr std::array<std::uint32_t, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

/// Randomly shifted Halton point: coordinate `dim` of point `index`.
/// Shifting is a Cranley-Patterson rotation, so prefixes stay nested.
inline double halton(std::uint64_t index, std::size_t dim, double shift) {
  const double v = radical_inverse(index + 1, kPrimes[dim % kPrimes.size()]) + shift;
  return v - std::floor(v);
}

}  // namespace degsde::rng
