// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/hash.hpp"
#include "medlite/query/tokenize.hpp"

namespace medlite {

inline constexpr std::size_t kEmbeddingDim = 64;
using Embedding = std::array<float, kEmbeddingDim>;
using TokenSet = std::vector<std::string>;  // sorted, unique

struct SimilarityConfig {
  double alpha = 0.3;
  double threshold = 0.92;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("similarity alpha must lie in [0, 1]");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("similarity threshold must lie in (0, 1]");
  }
};

inline TokenSet token_set(std::string_view text) {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

// |a ∩ b| / |a ∪ b|; two empty sets count as identical.
inline double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::string> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  return inter / (static_cast<double>(a.size() + b.size()) - inter);
}

// Feature-hashed bag of tokens: each token adds 1 to bucket fnv1a64(token)
// mod D, then the vector is L2-normalized. Empty text gives the zero vector.
inline Embedding embed(std::string_view text) {
  std::array<double, kEmbeddingDim> acc{};
  for (const auto& tok : tokenize(text)) acc[fnv1a64(tok) % kEmbeddingDim] += 1.0;
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  Embedding out{};
  if (norm == 0.0) return out;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

// Cosine with the zero-vector convention cos = 0.
inline double cosine(const Embedding& a, const Embedding& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

// alpha * jaccard + (1 - alpha) * cosine, clamped to [0, 1] against float
// rounding in the cosine. Equal terms short-circuit so identical queries
// score exactly 1 for any alpha.
inline double combine_similarity(double jac, double cos, const SimilarityConfig& cfg) {
  if (jac == cos) return std::clamp(jac, 0.0, 1.0);
  return std::clamp(cfg.alpha * jac + (1.0 - cfg.alpha) * cos, 0.0, 1.0);
}

inline double similarity(const TokenSet& t1, const Embedding& e1, const TokenSet& t2, const Embedding& e2,
                         const SimilarityConfig& cfg) {
  return combine_similarity(jaccard(t1, t2), cosine(e1, e2), cfg);
}

inline double similarity(std::string_view q1, std::string_view q2, const SimilarityConfig& cfg = {}) {
  cfg.validate();
  return similarity(token_set(q1), embed(q1), token_set(q2), embed(q2), cfg);
}

}  // namespace medlite
