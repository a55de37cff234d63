// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/random.hpp"

namespace medlite {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data has " + std::to_string(data_.size()) + " entries, expected " +
                           std::to_string(rows_ * cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) { return rect_identity(n, n); }

  // Ones on the main diagonal, zeros elsewhere.
  static Matrix rect_identity(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data_) v = rng.normal(0.0, stddev);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
  }

  double frobenius_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  Matrix& operator+=(const Matrix& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Matrix& operator-=(const Matrix& other) {
    require_same_shape(other, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }

  Matrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void require_same_shape(const Matrix& other, const char* op) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
      throw DimensionError(std::string("shape mismatch in ") + op);
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw DimensionError("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                         std::to_string(x.size()) + " entries");
  }
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace medlite
