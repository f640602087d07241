#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "degsde/rng.hpp"

using namespace degsde::rng;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("uniform conversions stay in range") {
  CHECK(u01(0, 0) == 0.0);
  CHECK(u01(0xffffffffu, 0xffffffffu) < 1.0);
  CHECK(u01_open_low(0, 0) > 0.0);
  CHECK(u01_open_low(0xffffffffu, 0xffffffffu) == 1.0);
}

TEST_CASE("gaussian streams are order independent and distinct") {
  std::vector<double> a(3), b(3), c(3);
  gaussians(9, 5, 2, 17, a);
  gaussians(9, 4, 2, 17, c);
  gaussians(9, 5, 2, 17, b);
  CHECK(a == b);
  CHECK(a != c);
  gaussians(9, 5, 3, 17, c);
  CHECK(a != c);
  gaussians(10, 5, 2, 17, c);
  CHECK(a != c);
}

TEST_CASE("gaussian moments") {
  const int N = 200000;
  double s = 0, s2 = 0, s4 = 0;
  std::vector<double> z(2);
  for (int k = 0; k < N / 2; ++k) {
    gaussians(1, 0, 0, static_cast<std::uint32_t>(k), z);
    for (double v : z) {
      s += v;
      s2 += v * v;
      s4 += v * v * v * v;
    }
  }
  const double mean = s / N, var = s2 / N - mean * mean, kurt = s4 / N;
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(N));
  CHECK(std::fabs(var - 1.0) < 4.0 * std::sqrt(2.0 / N));
  CHECK(std::fabs(kurt - 3.0) < 4.0 * std::sqrt(96.0 / N));
}

TEST_CASE("auxiliary streams do not collide with Brownian counters") {
  const auto [u0, u1] = uniforms(3, Stream::BandSamples, 0, 0);
  const auto [v0, v1] = uniforms(3, Stream::SliceRotation, 0, 0);
  CHECK(u0 != v0);
  CHECK(u1 != v1);
  CHECK(static_cast<std::uint32_t>(Stream::SliceRotation) > kMaxBrownianLevel);
}

TEST_CASE("halton prefixes are nested and low discrepancy") {
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(3, 2) == 0.75);
  CHECK(radical_inverse(1, 3) == 1.0 / 3.0);
  const int N = 4096;
  double mean = 0;
  for (int k = 0; k < N; ++k) {
    const double v = halton(static_cast<std::uint64_t>(k), 1, 0.37);
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    mean += v;
  }
  CHECK(std::fabs(mean / N - 0.5) < 1e-3);
}
