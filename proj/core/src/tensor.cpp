#include "kda/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "kda/census.hpp"

namespace kda {
namespace {
std::atomic<bool> g_checked{true};
}  // namespace

bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }
void set_checked_mode(bool on) { g_checked.store(on, std::memory_order_relaxed); }

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.rows(), a.cols()) + " vs " +
                     shape_string(b.rows(), b.cols()));
  }
}

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string(rows, cols));
  }
  if (checked_mode() && !all_finite()) throw NumericError("non-finite entry in matrix data");
}

template <typename T>
BasicMatrix<T>::BasicMatrix(std::initializer_list<std::initializer_list<T>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (checked_mode() && !all_finite()) throw NumericError("non-finite entry in matrix data");
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::identity(std::size_t n) {
  BasicMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
  return m;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::diag(std::span<const T> d) {
  BasicMatrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::rows_slice(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("row slice out of range");
  BasicMatrix out(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_, out.data_.begin());
  return out;
}

template <typename T>
void BasicMatrix<T>::set_rows(std::size_t first, const BasicMatrix& block) {
  if (block.cols_ != cols_ || first + block.rows_ > rows_) throw ShapeError("set_rows out of range");
  std::copy(block.data_.begin(), block.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(first * cols_));
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::transposed() const {
  BasicMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

template <typename T>
bool BasicMatrix<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
BasicMatrix<T>& BasicMatrix<T>::operator+=(const BasicMatrix& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

template <typename T>
BasicMatrix<T>& BasicMatrix<T>::operator-=(const BasicMatrix& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

template <typename T>
BasicMatrix<T>& BasicMatrix<T>::operator*=(T s) noexcept {
  for (auto& x : data_) x *= s;
  return *this;
}

template <typename T>
BasicLowerTriangular<T>::BasicLowerTriangular(BasicMatrix<T> m) : m_(std::move(m)) {
  if (!m_.is_square()) throw ShapeError("lower-triangular matrix must be square, got " + shape_string(m_.rows(), m_.cols()));
  for (std::size_t i = 0; i < m_.rows(); ++i)
    for (std::size_t j = i + 1; j < m_.cols(); ++j)
      if (m_(i, j) != T(0)) throw ContractError("nonzero entry above the diagonal");
}

template <typename T>
bool BasicLowerTriangular<T>::is_unit() const noexcept {
  for (std::size_t i = 0; i < m_.rows(); ++i)
    if (m_(i, i) != T(1)) return false;
  return true;
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " x " + shape_string(b.rows(), b.cols()));
  }
  census::count_matmul();
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  // i-k-j order: each out(i, j) still accumulates over k in ascending order.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      const T* bk = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(a.rows(), a.cols()) + "^T x " + shape_string(b.rows(), b.cols()));
  }
  census::count_matmul();
  BasicMatrix<T> out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* bk = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = a(k, i);
      T* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * bk[j];
    }
  }
  return out;
}

template <typename T>
BasicLowerTriangular<T> tril_inverse_unit(const BasicLowerTriangular<T>& l) {
  if (!l.is_unit()) throw ContractError("tril_inverse_unit: diagonal entries must be exactly one");
  const std::size_t n = l.dim();
  const auto& src = l.matrix();
  BasicMatrix<T> x(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) x(i, j) = -src(i, j);
  // Row i of the strictly-lower part of the inverse: x(i, j) += sum_k x(i, k) x(k, j)
  // over j < k < i. Ascending j reads only entries of row i that are not yet updated.
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      T acc = x(i, j);
      for (std::size_t k = j + 1; k < i; ++k) acc += x(i, k) * x(k, j);
      x(i, j) = acc;
    }
  }
  for (std::size_t i = 0; i < n; ++i) x(i, i) = T(1);
  return BasicLowerTriangular<T>(std::move(x));
}

template <typename T>
BasicMatrix<T> masked(const BasicMatrix<T>& m, Mask mask) {
  if (!m.is_square()) throw ShapeError("masked: matrix must be square, got " + shape_string(m.rows(), m.cols()));
  BasicMatrix<T> out(m.rows(), m.cols());
  const std::size_t off = mask == Mask::Tril ? 0 : 1;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j + off <= i; ++j) out(i, j) = m(i, j);
  return out;
}

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "hadamard");
  BasicMatrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <typename T>
BasicMatrix<T> cumsum_rows(const BasicMatrix<T>& m, std::size_t first, std::size_t count) {
  if (first + count > m.rows()) throw ShapeError("cumsum_rows out of range");
  BasicMatrix<T> out(count, m.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = (r ? out(r - 1, c) : T(0)) + m(first + r, c);
  return out;
}

template <typename T>
T max_abs(const BasicMatrix<T>& m) {
  T best = 0;
  for (T x : m.data()) best = std::max(best, std::abs(x));
  return best;
}

template <typename T>
T max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T best = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = std::abs(a.data()[i] - b.data()[i]);
    if (std::isnan(d)) return d;
    best = std::max(best, d);
  }
  return best;
}

template <typename T>
T frobenius(const BasicMatrix<T>& m) {
  T acc = 0;
  for (T x : m.data()) acc += x * x;
  return std::sqrt(acc);
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T norm2(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

#define KDA_INSTANTIATE_TENSOR(T)                                                                        \
  template class BasicMatrix<T>;                                                                         \
  template class BasicLowerTriangular<T>;                                                                \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);                          \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);                       \
  template BasicLowerTriangular<T> tril_inverse_unit(const BasicLowerTriangular<T>&);                    \
  template BasicMatrix<T> masked(const BasicMatrix<T>&, Mask);                                           \
  template BasicMatrix<T> hadamard(const BasicMatrix<T>&, const BasicMatrix<T>&);                        \
  template BasicMatrix<T> cumsum_rows(const BasicMatrix<T>&, std::size_t, std::size_t);                  \
  template T max_abs(const BasicMatrix<T>&);                                                             \
  template T max_abs_diff(const BasicMatrix<T>&, const BasicMatrix<T>&);                                 \
  template T frobenius(const BasicMatrix<T>&);                                                           \
  template T dot(std::span<const T>, std::span<const T>);                                                \
  template T norm2(std::span<const T>);                                                                  \
  template void require_same_shape(const BasicMatrix<T>&, const BasicMatrix<T>&, const char*);

KDA_INSTANTIATE_TENSOR(double)
KDA_INSTANTIATE_TENSOR(float)

#undef KDA_INSTANTIATE_TENSOR

}  // namespace kda
