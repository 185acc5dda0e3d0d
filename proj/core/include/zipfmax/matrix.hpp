#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zipfmax {

// Dense row-major matrix. Scalar type is float or double; everything that
// touches gradients runs in double, speed runs opt into float.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int64_t rows, int64_t cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) {
      throw std::invalid_argument("Matrix: negative shape " + shape_string(rows, cols));
    }
    data_.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), T(0));
  }

  static Matrix filled(int64_t rows, int64_t cols, T value) {
    Matrix m(rows, cols);
    for (auto& x : m.data_) x = value;
    return m;
  }

  static Matrix identity(int64_t n) {
    Matrix m(n, n);
    for (int64_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator()(int64_t r, int64_t c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  T operator()(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<T> row(int64_t r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const T> row(int64_t r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), T(0)); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(int64_t r, int64_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  int64_t rows_ = 0;
  int64_t cols_ = 0;
  std::vector<T> data_;
};

enum class Trans { none, yes };

// c = alpha * op(a) * op(b) + beta * c. Deterministic for fixed inputs,
// precision and worker count.
template <typename T>
void gemm_into(const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb, Matrix<T>& c,
               T alpha = T(1), T beta = T(0));

// Plain product; throws std::invalid_argument naming both shapes on mismatch.
template <typename T>
Matrix<T> gemm(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("gemm: inner dimensions differ, lhs " + a.shape() + " rhs " + b.shape());
  }
  Matrix<T> c(a.rows(), b.cols());
  gemm_into(a, Trans::none, b, Trans::none, c);
  return c;
}

template <typename T>
bool all_finite(const Matrix<T>& m);

// Squared Frobenius norm, accumulated in double.
template <typename T>
double squared_norm(const Matrix<T>& m);

// y += alpha * x (shapes must match).
template <typename T>
void add_scaled(Matrix<T>& y, const Matrix<T>& x, T alpha);

// Number of gemm workers (1 = fully sequential). Affects the CBLAS backend;
// recorded in timing metadata.
void set_gemm_threads(int n);
int gemm_threads();

// Name of the active gemm backend ("cblas" or "blocked").
const char* gemm_backend();

extern template class Matrix<float>;
extern template class Matrix<double>;

}  // namespace zipfmax
