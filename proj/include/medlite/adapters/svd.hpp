// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"

namespace medlite {

// Thin SVD: m = u * diag(sigma) * v^T with u (rows x p), v (cols x p),
// p = min(rows, cols), sigma sorted descending.
struct Svd {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

namespace detail {

// One-sided (Hestenes) Jacobi on a tall matrix. Orthogonalizes the columns
// of `work` in place while accumulating the rotations into `v`.
inline void hestenes_jacobi(Matrix& work, Matrix& v) {
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();
  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p);
          const double wq = work(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p);
          const double wq = work(i, q);
          work(i, p) = c * wp - s * wq;
          work(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

inline Svd svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix work = a;
  Matrix v = Matrix::identity(n);
  hestenes_jacobi(work, v);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += work(i, j) * work(i, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = norms[j] > 0.0 ? work(i, j) / norms[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
  }
  return out;
}

}  // namespace detail

inline Svd svd(const Matrix& a) {
  if (a.size() == 0) throw DimensionError("svd of an empty matrix");
  if (!a.all_finite()) throw DomainError("svd input contains non-finite entries");
  if (a.rows() >= a.cols()) return detail::svd_tall(a);
  Svd t = detail::svd_tall(a.transposed());
  return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

// sigma_max / sigma_min over the strictly positive singular values; +inf when
// the smallest of those falls below 1e-300. Throws DomainError for a zero
// matrix.
inline double condition_from_sigma(const std::vector<double>& sigma) {
  double smax = 0.0;
  double smin = std::numeric_limits<double>::infinity();
  for (double sv : sigma) {
    if (sv > 0.0) {
      smax = std::max(smax, sv);
      smin = std::min(smin, sv);
    }
  }
  if (smax == 0.0) throw DomainError("condition number of a zero matrix");
  if (smin < 1e-300) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

inline double condition_number(const Matrix& m) { return condition_from_sigma(svd(m).sigma); }

}  // namespace medlite
