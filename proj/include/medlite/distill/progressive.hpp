// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/query/tokenize.hpp"

namespace medlite {

// Corpus token frequencies. A token is rare when its count is below
// `rare_below`; tokens absent from the table count as 0.
struct FrequencyTable {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t rare_below = 5;

  bool is_rare(const std::string& token) const {
    auto it = counts.find(token);
    return (it == counts.end() ? 0 : it->second) < rare_below;
  }
};

// token count + 3 * rare token count
inline double complexity_score(std::string_view text, const FrequencyTable& freq) {
  const auto tokens = tokenize(text);
  std::size_t rare = 0;
  for (const auto& t : tokens) rare += freq.is_rare(t) ? 1 : 0;
  return static_cast<double>(tokens.size()) + 3.0 * static_cast<double>(rare);
}

// Indices of `complexity` in ascending order; stable, so equal scores keep
// their input order.
inline std::vector<std::size_t> progressive_order(std::span<const double> complexity) {
  std::vector<std::size_t> order(complexity.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return complexity[a] < complexity[b]; });
  return order;
}

// Splits the progressive order into consecutive batches; the last batch may
// be short.
inline std::vector<std::vector<std::size_t>> progressive_batches(std::span<const double> complexity,
                                                                 std::size_t batch_size) {
  if (batch_size == 0) throw DomainError("batch size must be positive");
  const auto order = progressive_order(complexity);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return batches;
}

}  // namespace medlite
