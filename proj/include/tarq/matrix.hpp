#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tarq/error.hpp"

namespace tarq {

// Dense row-major matrix of doubles. Used for weights (m x n, rows are
// output channels) and for any non-symmetric n x n statistic.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  double trace() const;
  double frobenius_norm() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// Row-parallel product; each output entry sums over k in ascending order so
// the result does not depend on the thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

// Symmetric n x n matrix. Construction enforces exact symmetry by averaging
// mirrored entries, which leaves already-symmetric input bit-identical.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
  static SymMatrix zeros(std::size_t n) { return SymMatrix(Matrix(n, n)); }
  static SymMatrix diagonal(std::span<const double> diag) {
    return SymMatrix(Matrix::diagonal(diag));
  }

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const noexcept { return m_; }
  double trace() const { return m_.trace(); }
  double mean_diagonal() const { return dim() == 0 ? 0.0 : trace() / static_cast<double>(dim()); }

  bool operator==(const SymMatrix& other) const = default;

 private:
  Matrix m_;
};

inline void require_dims(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kDimMismatch, what);
}

}  // namespace tarq
