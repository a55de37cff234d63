// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "medlite/core/error.hpp"

namespace medlite {

inline constexpr double kDefaultEtaMin = 1e-5;
inline constexpr double kDefaultEtaMax = 5e-5;

struct TrainingSchedule {
  double eta_min = kDefaultEtaMin;
  double eta_max = kDefaultEtaMax;
  std::int64_t total_steps = 1;  // T
  std::int64_t restarts = 1;     // R

  std::int64_t horizon() const noexcept { return total_steps * restarts; }

  void validate() const {
    if (!(eta_min >= 0.0) || !(eta_max > eta_min) || !std::isfinite(eta_max)) {
      throw DomainError("schedule requires 0 <= eta_min < eta_max");
    }
    if (total_steps < 1) throw DomainError("schedule requires total_steps >= 1");
    if (restarts < 1) throw DomainError("schedule requires restarts >= 1");
  }
};

// eta_t = eta_min + (eta_max - eta_min) / 2 * (1 + cos(pi * t / (T * R)))
//
// R sits in the denominator, so a larger restart count stretches a single
// cosine arc over T * R steps instead of producing warm restarts.
inline double lr_at(const TrainingSchedule& s, std::int64_t t) {
  s.validate();
  if (t < 0 || t > s.horizon()) {
    throw DomainError("step " + std::to_string(t) + " outside [0, " + std::to_string(s.horizon()) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(s.horizon());
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(phase));
}

}  // namespace medlite
