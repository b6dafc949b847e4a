#include "doctest.h"
#include "mdev/bounds.hpp"
#include "mdev/harness.hpp"
#include "mdev/integrator.hpp"
#include "mdev/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace mdev;

TEST_SUITE("rng") {
  TEST_CASE("philox4x32-10 known answers") {
    // Reference vectors distributed with the Random123 library.
    auto z = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(z[0] == 0x6627e8d5u);
    CHECK(z[1] == 0xe169c58du);
    CHECK(z[2] == 0xbc57ac4cu);
    CHECK(z[3] == 0x9b00dbd8u);
    auto f = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(f[0] == 0x408f276du);
    CHECK(f[1] == 0x41c83b0eu);
    CHECK(f[2] == 0xa20bc7c6u);
    CHECK(f[3] == 0x6d5451fdu);
    auto p = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(p[0] == 0xd16cfe09u);
    CHECK(p[1] == 0x94fdccebu);
    CHECK(p[2] == 0x5001e420u);
    CHECK(p[3] == 0x24126ea1u);
  }

  TEST_CASE("noise is a pure function of its address") {
    CHECK(noise_value(7, 3, 11, 0) == noise_value(7, 3, 11, 0));
    CHECK(noise_value(7, 3, 11, 0) != noise_value(7, 3, 11, 1));
    CHECK(noise_value(7, 3, 11, 0) != noise_value(7, 4, 11, 0));
    CHECK(noise_value(7, 3, 11, 0) != noise_value(8, 3, 11, 0));
    // Steps beyond 2^32 are addressable.
    CHECK(noise_value(1, 0, (1ull << 32) + 5, 0) != noise_value(1, 0, 5, 0));
  }

  TEST_CASE("uniform stays in the open unit interval") {
    CounterRng rng(1, 0);
    for (std::uint32_t i = 0; i < 100000; ++i) {
      const double u = rng.uniform(0, i);
      REQUIRE(u > 0.0);
      REQUIRE(u < 1.0);
    }
  }

  TEST_CASE("normal draws: mean, variance and KS") {
    const int n = 1000000;
    double s = 0, s2 = 0;
    std::vector<double> first;
    for (int i = 0; i < n; ++i) {
      const double z = noise_value(42, 0, static_cast<std::uint64_t>(i), 0);
      s += z;
      s2 += z * z;
      if (i < 100000) first.push_back(z);
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.01);
    std::sort(first.begin(), first.end());
    CHECK(ks_distance(first) <= 0.006);
  }

  TEST_CASE("splitmix64 mixes") {
    CHECK(splitmix64(0) != splitmix64(1));
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
  }
}
