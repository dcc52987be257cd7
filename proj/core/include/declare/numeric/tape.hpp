#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "declare/numeric/matrix.hpp"

namespace declare::numeric {

// Handle to a value recorded on a Tape. Only meaningful for the tape that
// produced it.
struct Var {
  std::uint32_t id = 0;
};

// Identifies a trainable parameter across tapes.
struct ParamId {
  std::size_t value = 0;
  friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

template <typename T>
using Gradients = std::map<ParamId, Matrix<T>>;

// Records primitive operations in order and replays them backwards to
// accumulate adjoints. A tape is single-threaded; build a fresh one per loss
// evaluation.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var constant(Matrix<T> value);
  // The tape keeps a reference to `value`; it must outlive the tape.
  Var parameter(const Matrix<T>& value, ParamId id);
  Var parameter(Matrix<T>&& value, ParamId id) = delete;

  const Matrix<T>& value(Var v) const;
  T scalar(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  // x·Wᵀ + b, with the 1×out bias broadcast over the rows of x.
  Var linear(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  Var tanh(Var a);
  Var sigmoid(Var a);
  // Subgradient at 0 is 0.
  Var relu(Var a);
  Var exp(Var a);
  Var softmax(Var a, std::vector<std::uint8_t> mask = {});
  Var concat_cols(std::span<const Var> parts);
  Var stack_rows(std::span<const Var> parts);
  Var gather_row(Var table, std::size_t row);
  Var transpose(Var a);
  Var sum(Var a);
  Var sum_squares(Var a);

  // −[y log p + (1−y) log(1−p)] with p clamped to [eps, 1−eps].
  Var binary_cross_entropy(Var probability, T target, T eps);
  // −log p[target] with p clamped to [eps, 1−eps].
  Var cross_entropy(Var probabilities, std::size_t target, T eps);
  Var squared_error(Var prediction, T target);

  // Reverse sweep from a 1×1 loss. Every parameter registered on the tape gets
  // an entry, zero when the loss does not depend on it. `visit` is called with
  // each node index in the order the sweep reaches it.
  Gradients<T> backward(Var loss, const std::function<void(std::size_t)>& visit = {}) const;

 private:
  enum class Op : std::uint8_t {
    leaf,
    matmul,
    linear,
    add,
    sub,
    mul,
    scale,
    tanh,
    sigmoid,
    relu,
    exp,
    softmax,
    concat_cols,
    stack_rows,
    gather_row,
    transpose,
    sum,
    sum_squares,
    binary_cross_entropy,
    cross_entropy,
    squared_error,
  };

  struct Node {
    Op op = Op::leaf;
    bool needs_grad = false;
    std::vector<std::uint32_t> inputs;
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    std::optional<ParamId> param;
    T scalar{};
    T target{};
    std::size_t index = 0;
    std::vector<std::uint8_t> mask;

    const Matrix<T>& value() const { return external ? *external : owned; }
  };

  Var push(Node node);
  const Node& node(Var v) const;
  bool any_needs_grad(std::initializer_list<Var> vars) const;
  void propagate(const Node& n, const Matrix<T>& grad, std::vector<Matrix<T>>& adjoints) const;

  std::vector<Node> nodes_;
};

}  // namespace declare::numeric
