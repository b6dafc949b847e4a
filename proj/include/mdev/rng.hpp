#pragma once

#include <array>
#include <cstdint>

namespace mdev {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-addressable random source: every draw is a pure function of
/// (seed, stream, counter), so draws can be produced in any order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint32_t stream);

  std::array<std::uint32_t, 4> block(std::uint64_t a, std::uint32_t b,
                                     std::uint32_t c) const;
  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform(std::uint64_t a, std::uint32_t b, std::uint32_t c = 0) const;
  /// Standard normal via Box-Muller on one Philox block (exact transform).
  double normal(std::uint64_t a, std::uint32_t b, std::uint32_t c = 0) const;

 private:
  std::array<std::uint32_t, 2> key_;
};

enum class Stream : std::uint32_t {
  kEmNoise = 0,
  kDiagnostics = 1,
  kLm21 = 2,
};

}  // namespace mdev
