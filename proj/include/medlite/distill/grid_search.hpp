// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/distill/loss.hpp"

namespace medlite {

// Validation callback: higher is better.
using LambdaEvaluator = std::function<double(const DistillLossWeights&)>;

// Exhaustive search; the first listed candidate wins ties.
inline DistillLossWeights grid_search_lambdas(std::span<const DistillLossWeights> candidates,
                                              const LambdaEvaluator& eval) {
  if (candidates.empty()) throw DomainError("grid search needs at least one candidate");
  std::size_t best = 0;
  double best_score = eval(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double score = eval(candidates[i]);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return candidates[best];
}

// Cartesian product of per-weight value lists, lambda1 varying slowest.
inline std::vector<DistillLossWeights> lambda_grid(std::span<const double> ce, std::span<const double> kl,
                                                   std::span<const double> mse, std::span<const double> entity) {
  std::vector<DistillLossWeights> grid;
  for (double a : ce)
    for (double b : kl)
      for (double c : mse)
        for (double d : entity) grid.push_back({a, b, c, d});
  return grid;
}

}  // namespace medlite
