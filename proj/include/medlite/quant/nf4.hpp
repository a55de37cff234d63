// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace medlite {

using Nf4Levels = std::array<double, 16>;

// NormalFloat4 codebook: 7 negative and 8 positive standard-normal quantiles
// plus an exact zero, each side normalized to [-1, 1]. Generated by
// tools/nf4_levels.py (50-digit inverse normal CDF); do not edit by hand.
inline constexpr Nf4Levels kNf4Levels = {
    -1.0000000000000000,
    -0.69621404577398545,
    -0.52509276953607121,
    -0.39493361921257271,
    -0.28445348206749502,
    -0.18478150019347434,
    -0.091054015259703669,
    0.0,
    0.079583848591969126,
    0.16093722491958503,
    0.24612289600943402,
    0.33792933751945522,
    0.44072736736128608,
    0.56263741204003527,
    0.72297757474787389,
    1.0000000000000000,
};

inline constexpr std::uint8_t kNf4ZeroCode = 7;

inline const Nf4Levels& nf4_levels() noexcept { return kNf4Levels; }

// Index of the level nearest to x (x already divided by the block scale).
// Exact midpoints go to the lower index.
inline std::uint8_t nf4_nearest_code(double x) noexcept {
  std::uint8_t lo = 0;
  std::uint8_t hi = 15;
  if (x <= kNf4Levels[lo]) return lo;
  if (x >= kNf4Levels[hi]) return hi;
  while (hi - lo > 1) {
    const auto mid = static_cast<std::uint8_t>((lo + hi) / 2);
    if (kNf4Levels[mid] <= x) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // kNf4Levels[lo] <= x < kNf4Levels[hi]
  return (x - kNf4Levels[lo] <= kNf4Levels[hi] - x) ? lo : hi;
}

}  // namespace medlite
