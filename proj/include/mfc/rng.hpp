#pragma once

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (key, counter), so streams can be consumed in any order and by any number
// of workers with identical results.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfc {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

/// Stream of draws addressed by (purpose, index, step) under a 64-bit seed.
class CounterRng {
 public:
  enum class Purpose : std::uint32_t { noise = 0, initial = 1, lift = 2, init_control = 3 };

  explicit CounterRng(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Philox4x32Counter block(Purpose purpose, std::uint64_t index, std::uint32_t step) const {
    return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), step,
                       static_cast<std::uint32_t>(purpose)},
                      key_);
  }

  /// Two uniforms in (0, 1), 53 bits each.
  std::array<double, 2> uniforms(Purpose purpose, std::uint64_t index, std::uint32_t step) const {
    const auto b = block(purpose, index, step);
    return {to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3])};
  }

  /// One standard normal by Box-Muller.
  double normal(Purpose purpose, std::uint64_t index, std::uint32_t step) const {
    const auto u = uniforms(purpose, index, step);
    return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
  }

 private:
  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32Key key_;
};

}  // namespace mfc
