#include "declare/numeric/matrix.hpp"

#include <cmath>
#include <limits>

namespace declare::numeric {

namespace {

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

template <typename T, typename F>
Matrix<T> map(const Matrix<T>& a, F f) {
  Matrix<T> out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
Matrix<T> zip(const Matrix<T>& a, const Matrix<T>& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Matrix<T> out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

template <typename T>
Matrix<T> matmul_transposed(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto x = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto y = b.row(j);
      T acc{};
      for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * y[k];
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
Matrix<T> transposed_matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("transposed_matmul: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto x = a.row(k);
    auto y = b.row(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T xi = x[i];
      auto dst = out.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) dst[j] += xi * y[j];
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  return zip(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
  return zip(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
Matrix<T> mul(const Matrix<T>& a, const Matrix<T>& b) {
  return zip(a, b, "mul", [](T x, T y) { return x * y; });
}

template <typename T>
Matrix<T> scale(const Matrix<T>& a, T factor) {
  return map(a, [factor](T x) { return x * factor; });
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Matrix<T> tanh(const Matrix<T>& a) {
  return map(a, [](T x) { return std::tanh(x); });
}

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& a) {
  return map(a, [](T x) { return sigmoid(x); });
}

template <typename T>
Matrix<T> relu(const Matrix<T>& a) {
  return map(a, [](T x) { return x > T{0} ? x : T{0}; });
}

template <typename T>
Matrix<T> exp(const Matrix<T>& a) {
  return map(a, [](T x) { return std::exp(x); });
}

template <typename T>
Matrix<T> softmax(const Matrix<T>& scores, std::span<const std::uint8_t> mask) {
  const auto in = scores.data();
  if (!mask.empty() && mask.size() != in.size()) {
    throw ShapeError("softmax: mask length " + std::to_string(mask.size()) +
                     " does not match scores " + scores.shape());
  }
  auto active = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

  T peak = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!active(i)) continue;
    any = true;
    peak = std::max(peak, in[i]);
  }
  if (!any) throw DegenerateInputError("softmax: every position is masked");

  Matrix<T> out(scores.rows(), scores.cols());
  auto dst = out.data();
  T total{};
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!active(i)) continue;
    dst[i] = std::exp(in[i] - peak);
    total += dst[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (active(i)) dst[i] /= total;
  }
  return out;
}

template <typename T>
void add_into(Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "add_into");
  auto dst = a.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
T sum(const Matrix<T>& a) {
  T acc{};
  for (T x : a.data()) acc += x;
  return acc;
}

template <typename T>
T max_abs(const Matrix<T>& a) {
  T best{};
  for (T x : a.data()) best = std::max(best, std::abs(x));
  return best;
}

#define DECLARE_INSTANTIATE(T)                                                   \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                 \
  template Matrix<T> matmul_transposed(const Matrix<T>&, const Matrix<T>&);      \
  template Matrix<T> transposed_matmul(const Matrix<T>&, const Matrix<T>&);      \
  template Matrix<T> transpose(const Matrix<T>&);                                \
  template Matrix<T> add(const Matrix<T>&, const Matrix<T>&);                    \
  template Matrix<T> sub(const Matrix<T>&, const Matrix<T>&);                    \
  template Matrix<T> mul(const Matrix<T>&, const Matrix<T>&);                    \
  template Matrix<T> scale(const Matrix<T>&, T);                                 \
  template Matrix<T> tanh(const Matrix<T>&);                                     \
  template Matrix<T> sigmoid(const Matrix<T>&);                                  \
  template Matrix<T> relu(const Matrix<T>&);                                     \
  template Matrix<T> exp(const Matrix<T>&);                                      \
  template T sigmoid(T);                                                         \
  template Matrix<T> softmax(const Matrix<T>&, std::span<const std::uint8_t>);   \
  template void add_into(Matrix<T>&, const Matrix<T>&);                          \
  template T sum(const Matrix<T>&);                                              \
  template T max_abs(const Matrix<T>&);

DECLARE_INSTANTIATE(float)
DECLARE_INSTANTIATE(double)

#undef DECLARE_INSTANTIATE

}  // namespace declare::numeric
