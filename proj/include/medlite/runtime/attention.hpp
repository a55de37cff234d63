// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"

namespace medlite {

struct AttentionStats {
  std::size_t score_buffer_elements = 0;  // peak scores held at once
};

namespace detail {
inline void check_attention_shapes(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) throw DimensionError("Q and K must share the key dimension");
  if (k.rows() != v.rows()) throw DimensionError("K and V must have the same number of rows");
  if (q.rows() == 0 || k.rows() == 0 || q.cols() == 0 || v.cols() == 0) {
    throw DimensionError("attention inputs must be non-empty");
  }
  if (!q.all_finite() || !k.all_finite() || !v.all_finite()) throw DomainError("attention inputs must be finite");
}
}  // namespace detail

// softmax(Q K^T / sqrt(d)) V with the full n x m score matrix. Reference path.
inline Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v, AttentionStats* stats = nullptr) {
  detail::check_attention_shapes(q, k, v);
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), e = v.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix scores = matmul(q, k.transposed());
  scores *= inv;
  Matrix out(n, e, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, scores(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      scores(i, j) = std::exp(scores(i, j) - mx);
      sum += scores(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double p = scores(i, j) / sum;
      for (std::size_t c = 0; c < e; ++c) out(i, c) += p * v(j, c);
    }
  }
  if (stats) stats->score_buffer_elements = n * m;
  return out;
}

// Same result, streaming K/V in tiles of `tile` rows. Each query row keeps a
// running max, normalizer and weighted sum that are rescaled whenever the
// max grows, so only `tile` scores exist at a time.
inline Matrix tiled_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t tile,
                              AttentionStats* stats = nullptr) {
  detail::check_attention_shapes(q, k, v);
  if (tile == 0) throw DomainError("attention tile must be positive");
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), e = v.cols();
  tile = std::min(tile, m);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix out(n, e, 0.0);
  std::vector<double> s(tile);
  std::vector<double> acc(e);
  for (std::size_t i = 0; i < n; ++i) {
    double run_max = -std::numeric_limits<double>::infinity();
    double run_sum = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t start = 0; start < m; start += tile) {
      const std::size_t len = std::min(tile, m - start);
      double tile_max = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(start + j, c);
        s[j] = dot * inv;
        tile_max = std::max(tile_max, s[j]);
      }
      const double new_max = std::max(run_max, tile_max);
      const double rescale = std::exp(run_max - new_max);  // 0 on the first tile
      run_sum *= rescale;
      for (double& a : acc) a *= rescale;
      for (std::size_t j = 0; j < len; ++j) {
        const double p = std::exp(s[j] - new_max);
        run_sum += p;
        for (std::size_t c = 0; c < e; ++c) acc[c] += p * v(start + j, c);
      }
      run_max = new_max;
    }
    for (std::size_t c = 0; c < e; ++c) out(i, c) = acc[c] / run_sum;
  }
  if (stats) stats->score_buffer_elements = tile;
  return out;
}

}  // namespace medlite
