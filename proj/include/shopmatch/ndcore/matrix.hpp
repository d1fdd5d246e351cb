#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "shopmatch/errors.hpp"

namespace shopmatch {

// Row-major dense matrix. Tensor2 in the rest of the code base is the float
// instantiation; the double instantiation exists for gradient checking.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged initializer");
      std::copy(row.begin(), row.end(), m.row(i++).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T{});
  }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Tensor2 = Matrix<float>;

namespace detail {

// One output tile of c = a * b: RB rows by NV vectors of columns. Every
// element is accumulated from zero over p = 0..k-1 in ascending order, the
// same sequence the edge path uses, so a row's result never depends on how
// many other rows are in the product.
template <class T, std::size_t RB, std::size_t NV>
inline void gemm_tile(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                      std::size_t ldc, std::size_t k) {
  using V [[gnu::vector_size(32)]] = T;
  constexpr std::size_t W = sizeof(V) / sizeof(T);
  V acc[RB][NV] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    V bv[NV];
    for (std::size_t q = 0; q < NV; ++q) std::memcpy(&bv[q], brow + q * W, sizeof(V));
    for (std::size_t r = 0; r < RB; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t q = 0; q < NV; ++q) acc[r][q] += av * bv[q];
    }
  }
  for (std::size_t r = 0; r < RB; ++r) {
    for (std::size_t q = 0; q < NV; ++q) std::memcpy(c + r * ldc + q * W, &acc[r][q], sizeof(V));
  }
}

template <class T>
inline void gemm_edge(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                      std::size_t ldc, std::size_t k, std::size_t rb, std::size_t cb) {
  for (std::size_t r = 0; r < rb; ++r) {
    for (std::size_t q = 0; q < cb; ++q) {
      T acc = T{};
      for (std::size_t p = 0; p < k; ++p) acc += a[r * lda + p] * b[p * ldb + q];
      c[r * ldc + q] = acc;
    }
  }
}

}  // namespace detail

// c = a * b, overwriting c.
template <class T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (c.rows() != m || c.cols() != n) c.resize(m, n);
  constexpr std::size_t RB = 8;
  constexpr std::size_t NV = 2;
  constexpr std::size_t CB = NV * 32 / sizeof(T);
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  for (std::size_t j0 = 0; j0 < n; j0 += CB) {
    const std::size_t cb = std::min(CB, n - j0);
    for (std::size_t i0 = 0; i0 < m; i0 += RB) {
      const std::size_t rb = std::min(RB, m - i0);
      if (rb == RB && cb == CB) {
        detail::gemm_tile<T, RB, NV>(pa + i0 * k, k, pb + j0, n, pc + i0 * n + j0, n, k);
      } else {
        detail::gemm_edge(pa + i0 * k, k, pb + j0, n, pc + i0 * n + j0, n, k, rb, cb);
      }
    }
  }
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows(), b.cols());
  matmul(a, b, c);
  return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

template <class T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](T v) { return std::isfinite(v); });
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  T acc = T{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace shopmatch
