#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace degsde {

using Vector = std::vector<double>;

/// Dense row-major square-or-rectangular matrix. Small (n <= ~10) by intent.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * a^T
inline void outer_self(const Matrix& a, Matrix& out) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  if (out.rows() != n || out.cols() != n) out = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += a(i, k) * a(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
}

inline double norm2_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(norm2_sq(x)); }

inline double frobenius(const Matrix& a) { return norm2(a.data()); }

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace degsde
