#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "declare/errors.hpp"

namespace declare::numeric {

// Dense row-major matrix. Vectors are 1×n rows unless stated otherwise.
template <typename T>
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
                       " does not match shape " + shape_string(rows_, cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows);
  static Matrix row_vector(std::span<const T> values) {
    return Matrix(1, values.size(), std::vector<T>(values.begin(), values.end()));
  }
  static Matrix column_vector(std::span<const T> values) {
    return Matrix(values.size(), 1, std::vector<T>(values.begin(), values.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape() const { return shape_string(rows_, cols_); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  static std::string shape_string(std::size_t rows, std::size_t cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
Matrix<T> Matrix<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

// Plain (untracked) kernels. Binary operations throw ShapeError naming both
// operand shapes.

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

// a · bᵀ
template <typename T>
Matrix<T> matmul_transposed(const Matrix<T>& a, const Matrix<T>& b);

// aᵀ · b
template <typename T>
Matrix<T> transposed_matmul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b);

// Hadamard product.
template <typename T>
Matrix<T> mul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> scale(const Matrix<T>& a, T factor);

template <typename T>
Matrix<T> tanh(const Matrix<T>& a);

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& a);

template <typename T>
Matrix<T> relu(const Matrix<T>& a);

template <typename T>
Matrix<T> exp(const Matrix<T>& a);

// Numerically stable logistic function.
template <typename T>
T sigmoid(T x);

// Softmax over all entries of `scores`, treated as a flat vector. Positions
// whose mask entry is zero are excluded and come out exactly 0. An empty mask
// means every position is active.
template <typename T>
Matrix<T> softmax(const Matrix<T>& scores, std::span<const std::uint8_t> mask = {});

// Accumulates a += b in place.
template <typename T>
void add_into(Matrix<T>& a, const Matrix<T>& b);

template <typename T>
T sum(const Matrix<T>& a);

template <typename T>
T max_abs(const Matrix<T>& a);

}  // namespace declare::numeric
