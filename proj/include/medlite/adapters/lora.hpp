// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "medlite/adapters/svd.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"

namespace medlite {

inline constexpr std::size_t kDefaultLoraRank = 16;
inline constexpr double kDefaultLoraAlpha = 32.0;

// Low-rank update delta_W = B * A applied with scale alpha / rank.
// B is d x r, A is r x k.
struct LoraAdapter {
  Matrix b;
  Matrix a;
  double alpha = kDefaultLoraAlpha;

  std::size_t rank() const noexcept { return b.cols(); }
  std::size_t out_dim() const noexcept { return b.rows(); }
  std::size_t in_dim() const noexcept { return a.cols(); }
  double scale() const noexcept { return alpha / static_cast<double>(rank()); }

  void validate() const {
    if (b.cols() != a.rows()) {
      throw DimensionError("adapter B has " + std::to_string(b.cols()) + " columns but A has " +
                           std::to_string(a.rows()) + " rows");
    }
    if (rank() == 0) throw DimensionError("adapter rank must be positive");
    if (rank() > std::min(out_dim(), in_dim())) {
      throw DimensionError("adapter rank " + std::to_string(rank()) + " exceeds min(d, k)");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("adapter alpha must be positive and finite");
    if (!b.all_finite() || !a.all_finite()) throw DomainError("adapter factors contain non-finite entries");
  }

  // Standard LoRA initialization: A ~ N(0, 1/k), B = 0.
  static LoraAdapter init(std::size_t d, std::size_t k, std::size_t r, double alpha, Rng& rng) {
    LoraAdapter out{Matrix(d, r), Matrix::random_normal(r, k, rng, 1.0 / std::sqrt(static_cast<double>(k))), alpha};
    out.validate();
    return out;
  }
};

namespace detail {
inline void require_base_compatible(const Matrix& w0, const LoraAdapter& adapter) {
  adapter.validate();
  if (w0.rows() != adapter.out_dim() || w0.cols() != adapter.in_dim()) {
    throw DimensionError("base weight is " + std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()) +
                         ", adapter produces " + std::to_string(adapter.out_dim()) + "x" +
                         std::to_string(adapter.in_dim()));
  }
}
}  // namespace detail

// h = W0 x + (alpha / r) B (A x). Never forms B A.
inline std::vector<double> lora_forward(const Matrix& w0, const LoraAdapter& adapter, std::span<const double> x) {
  detail::require_base_compatible(w0, adapter);
  std::vector<double> h = matvec(w0, x);
  const std::vector<double> ax = matvec(adapter.a, x);
  const std::vector<double> bax = matvec(adapter.b, ax);
  const double s = adapter.scale();
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += s * bax[i];
  return h;
}

// W0 + (alpha / r) B A, for serving without the adapter indirection.
inline Matrix merge_adapter(const Matrix& w0, const LoraAdapter& adapter) {
  detail::require_base_compatible(w0, adapter);
  Matrix merged = matmul(adapter.b, adapter.a);
  merged *= adapter.scale();
  merged += w0;
  return merged;
}

struct StableSvdConfig {
  std::size_t rank = kDefaultLoraRank;
  double lambda0 = 1e-6;
  double kappa_max = 1e6;
  // Gradient-norm clip; consumed by the distillation training loop.
  double grad_clip = 1.0;
  // Components with sigma_i <= sigma_1 * truncation_eps are dropped.
  double truncation_eps = 1e-10;

  void validate() const {
    if (rank == 0) throw DomainError("stable SVD rank must be positive");
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw DomainError("lambda0 must be finite and >= 0");
    if (!(kappa_max > 1.0)) throw DomainError("kappa_max must exceed 1");
    if (!(grad_clip > 0.0)) throw DomainError("grad_clip must be positive");
    if (!(truncation_eps >= 0.0)) throw DomainError("truncation_eps must be >= 0");
  }
};

// lambda = lambda0 * min(kappa, kappa_max) / kappa_max
inline double adaptive_lambda(double kappa, const StableSvdConfig& cfg) noexcept {
  return cfg.lambda0 * std::min(kappa, cfg.kappa_max) / cfg.kappa_max;
}

struct StableSvdResult {
  Matrix delta;
  double lambda = 0.0;
  double kappa = 0.0;
  std::size_t kept = 0;
  std::vector<double> sigma;
};

// Truncated reconstruction of B A from its top singular triplets plus an
// adaptive ridge lambda * I (ones on the main diagonal when not square).
// A zero product is treated as maximally ill-conditioned (lambda = lambda0).
inline StableSvdResult stable_svd_decompose(const Matrix& b, const Matrix& a, const StableSvdConfig& cfg) {
  cfg.validate();
  if (!b.all_finite() || !a.all_finite()) throw DomainError("stable SVD input contains non-finite entries");
  const Matrix product = matmul(b, a);
  if (cfg.rank > std::min(product.rows(), product.cols())) {
    throw DimensionError("stable SVD rank " + std::to_string(cfg.rank) + " exceeds min(" +
                         std::to_string(product.rows()) + ", " + std::to_string(product.cols()) + ")");
  }
  const Svd s = svd(product);

  StableSvdResult out;
  out.sigma = s.sigma;
  out.delta = Matrix(product.rows(), product.cols());
  const double threshold = s.sigma.front() * cfg.truncation_eps;
  for (std::size_t i = 0; i < cfg.rank; ++i) {
    const double sigma = s.sigma[i];
    if (sigma <= threshold || sigma == 0.0) break;
    ++out.kept;
    for (std::size_t r = 0; r < product.rows(); ++r) {
      const double su = sigma * s.u(r, i);
      for (std::size_t c = 0; c < product.cols(); ++c) out.delta(r, c) += su * s.v(c, i);
    }
  }

  out.kappa = s.sigma.front() > 0.0 ? condition_from_sigma(s.sigma) : std::numeric_limits<double>::infinity();
  out.lambda = adaptive_lambda(out.kappa, cfg);
  if (out.lambda != 0.0) out.delta += Matrix::rect_identity(product.rows(), product.cols()) * out.lambda;
  return out;
}

inline Matrix stable_svd_update(const Matrix& b, const Matrix& a, const StableSvdConfig& cfg) {
  return stable_svd_decompose(b, a, cfg).delta;
}

}  // namespace medlite
