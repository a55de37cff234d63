// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/random.hpp"

namespace medlite {

enum class DeploymentMode { kAdapter, kMerged };

constexpr std::string_view to_string(DeploymentMode m) noexcept {
  return m == DeploymentMode::kAdapter ? "adapter" : "merged";
}

// P: performance, F: fit to clinical requirements, C: resource cost.
struct ModeCandidate {
  DeploymentMode mode = DeploymentMode::kMerged;
  double performance = 0.0;
  double fit = 0.0;
  double cost = 0.0;
};

struct DecisionWeights {
  double w1 = 1.0;
  double w2 = 1.0;
  double w3 = 1.0;

  void validate() const {
    for (double w : {w1, w2, w3}) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("decision weights must be finite and non-negative");
    }
  }

  bool operator==(const DecisionWeights&) const = default;
};

inline double decision_score(const ModeCandidate& c, const DecisionWeights& w) {
  return w.w1 * c.performance + w.w2 * c.fit - w.w3 * c.cost;
}

// Argmax of the decision score; an exact tie picks merged.
inline DeploymentMode decide_mode(const ModeCandidate& a, const ModeCandidate& b, const DecisionWeights& w) {
  w.validate();
  for (const auto* c : {&a, &b}) {
    if (!(c->performance >= 0) || !(c->fit >= 0) || !(c->cost >= 0) || !std::isfinite(c->performance) ||
        !std::isfinite(c->fit) || !std::isfinite(c->cost)) {
      throw DomainError("mode candidate scores must be finite and non-negative");
    }
  }
  if (a.mode == b.mode) throw ConfigError("decide_mode needs one adapter and one merged candidate");
  const double da = decision_score(a, w), db = decision_score(b, w);
  if (da == db) return DeploymentMode::kMerged;
  return da > db ? a.mode : b.mode;
}

struct WeightObservation {
  DecisionWeights weights;
  double score = 0.0;
};

struct TuneOptions {
  std::size_t budget = 200;  // objective evaluations
  std::uint64_t seed = 1;
  double upper = 2.0;          // each weight searched in [0, upper]
  double explore_share = 0.3;  // leading share of pure random draws
  double initial_step = 0.5;   // local Gaussian step, shrinking to 2% of it
};

// Random search followed by Gaussian refinement around the incumbent; the
// incumbent changes only on strict improvement, so a history that already
// holds the best point is never replaced by a worse one.
inline DecisionWeights tune_weights(const std::function<double(const DecisionWeights&)>& objective,
                                    std::span<const WeightObservation> history, const TuneOptions& opt = {}) {
  DecisionWeights best{};
  double best_score = -INFINITY;
  for (const auto& h : history) {
    if (h.score > best_score) {
      best = h.weights;
      best_score = h.score;
    }
  }
  if (opt.budget == 0) return best;
  Rng rng(opt.seed);
  std::size_t used = 0;
  auto consider = [&](const DecisionWeights& w) {
    const double s = objective(w);
    ++used;
    if (s > best_score) {
      best = w;
      best_score = s;
    }
  };
  if (history.empty()) consider(DecisionWeights{});
  const auto explore = static_cast<std::size_t>(std::ceil(opt.explore_share * static_cast<double>(opt.budget)));
  while (used < opt.budget && used < explore) {
    consider({rng.uniform(0, opt.upper), rng.uniform(0, opt.upper), rng.uniform(0, opt.upper)});
  }
  const std::size_t local_total = opt.budget - used;
  for (std::size_t i = 0; used < opt.budget; ++i) {
    const double frac = local_total <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(local_total - 1);
    const double step = opt.initial_step * std::pow(0.02, frac);
    auto clampw = [&](double x) { return std::clamp(x, 0.0, opt.upper); };
    consider({clampw(best.w1 + rng.normal(0, step)), clampw(best.w2 + rng.normal(0, step)),
              clampw(best.w3 + rng.normal(0, step))});
  }
  return best;
}

}  // namespace medlite
