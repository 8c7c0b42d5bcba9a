#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "kda/errors.hpp"

namespace kda {

// Checked mode validates shapes of raw buffers and rejects NaN/Inf when a
// matrix is built from external data. On by default; benchmarks switch it off.
bool checked_mode();
void set_checked_mode(bool on);

class CheckedModeGuard {
 public:
  explicit CheckedModeGuard(bool on) : previous_(checked_mode()) { set_checked_mode(on); }
  ~CheckedModeGuard() { set_checked_mode(previous_); }
  CheckedModeGuard(const CheckedModeGuard&) = delete;
  CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major matrix. T is double for verification and float for the
// benchmark path.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);
  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows);

  static BasicMatrix identity(std::size_t n);
  static BasicMatrix diag(std::span<const T> d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  // Copies rows [first, first + count).
  BasicMatrix rows_slice(std::size_t first, std::size_t count) const;
  void set_rows(std::size_t first, const BasicMatrix& block);

  BasicMatrix transposed() const;

  bool all_finite() const noexcept;

  BasicMatrix& operator+=(const BasicMatrix& o);
  BasicMatrix& operator-=(const BasicMatrix& o);
  BasicMatrix& operator*=(T s) noexcept;

  friend BasicMatrix operator+(BasicMatrix a, const BasicMatrix& b) { return a += b; }
  friend BasicMatrix operator-(BasicMatrix a, const BasicMatrix& b) { return a -= b; }
  friend BasicMatrix operator*(BasicMatrix a, T s) { return a *= s; }
  friend BasicMatrix operator*(T s, BasicMatrix a) { return a *= s; }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

template <typename T>
using BasicVector = std::vector<T>;
using Vector = std::vector<double>;

template <typename Dst, typename Src>
BasicMatrix<Dst> cast(const BasicMatrix<Src>& m) {
  std::vector<Dst> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = static_cast<Dst>(m.data()[i]);
  return BasicMatrix<Dst>(m.rows(), m.cols(), std::move(out));
}

// Square matrix whose strictly-upper entries are exactly zero.
template <typename T>
class BasicLowerTriangular {
 public:
  explicit BasicLowerTriangular(BasicMatrix<T> m);

  std::size_t dim() const noexcept { return m_.rows(); }
  const BasicMatrix<T>& matrix() const noexcept { return m_; }
  BasicMatrix<T> release() && { return std::move(m_); }
  bool is_unit() const noexcept;

 private:
  BasicMatrix<T> m_;
};

using LowerTriangular = BasicLowerTriangular<double>;

enum class Mask { Tril, StrictTril };

// a · b. Counts one matmul on the calling thread.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// aᵀ · b without materialising the transpose. Counts one matmul.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// Inverse of a unit-lower-triangular matrix by row-wise forward substitution.
template <typename T>
BasicLowerTriangular<T> tril_inverse_unit(const BasicLowerTriangular<T>& l);

template <typename T>
BasicMatrix<T> masked(const BasicMatrix<T>& m, Mask mask);

// Elementwise product.
template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// Cumulative sum down the rows (axis 0) of rows [first, first + count).
template <typename T>
BasicMatrix<T> cumsum_rows(const BasicMatrix<T>& m, std::size_t first, std::size_t count);

template <typename T>
T max_abs(const BasicMatrix<T>& m);

template <typename T>
T max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
T frobenius(const BasicMatrix<T>& m);

template <typename T>
T dot(std::span<const T> a, std::span<const T> b);

template <typename T>
T norm2(std::span<const T> a);

std::string shape_string(std::size_t rows, std::size_t cols);

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* what);

}  // namespace kda
