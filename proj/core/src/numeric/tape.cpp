#include "declare/numeric/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace declare::numeric {

namespace {

template <typename T>
void accumulate(std::vector<Matrix<T>>& adjoints, std::uint32_t id, Matrix<T> delta) {
  auto& slot = adjoints[id];
  if (slot.empty()) {
    slot = std::move(delta);
  } else {
    add_into(slot, delta);
  }
}

template <typename T>
T clamp_probability(T p, T eps) {
  return std::clamp(p, eps, T{1} - eps);
}

}  // namespace

template <typename T>
Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ContractError("tape: unknown value id " + std::to_string(v.id));
  }
  return nodes_[v.id];
}

template <typename T>
bool Tape<T>::any_needs_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [this](Var v) { return node(v).needs_grad; });
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
T Tape<T>::scalar(Var v) const {
  const auto& m = value(v);
  if (m.size() != 1) throw ContractError("tape: value " + m.shape() + " is not a scalar");
  return m[0];
}

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(const Matrix<T>& value, ParamId id) {
  Node n;
  n.external = &value;
  n.param = id;
  n.needs_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  Node n;
  n.op = Op::matmul;
  n.owned = numeric::matmul(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = any_needs_grad({a, b});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::linear(Var x, Var weight, Var bias) {
  const auto& b = value(bias);
  Matrix<T> out = matmul_transposed(value(x), value(weight));
  if (b.rows() != 1 || b.cols() != out.cols()) {
    throw ShapeError("linear: bias " + b.shape() + " does not match output " + out.shape());
  }
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  Node n;
  n.op = Op::linear;
  n.owned = std::move(out);
  n.inputs = {x.id, weight.id, bias.id};
  n.needs_grad = any_needs_grad({x, weight, bias});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  Node n;
  n.op = Op::add;
  n.owned = numeric::add(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = any_needs_grad({a, b});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  Node n;
  n.op = Op::sub;
  n.owned = numeric::sub(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = any_needs_grad({a, b});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  Node n;
  n.op = Op::mul;
  n.owned = numeric::mul(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.needs_grad = any_needs_grad({a, b});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  Node n;
  n.op = Op::scale;
  n.owned = numeric::scale(value(a), factor);
  n.scalar = factor;
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  Node n;
  n.op = Op::tanh;
  n.owned = numeric::tanh(value(a));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  Node n;
  n.op = Op::sigmoid;
  n.owned = numeric::sigmoid(value(a));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Node n;
  n.op = Op::relu;
  n.owned = numeric::relu(value(a));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::exp(Var a) {
  Node n;
  n.op = Op::exp;
  n.owned = numeric::exp(value(a));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::softmax(Var a, std::vector<std::uint8_t> mask) {
  Node n;
  n.op = Op::softmax;
  n.owned = numeric::softmax(value(a), mask);
  n.mask = std::move(mask);
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    const auto& m = value(p);
    if (m.rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " + value(parts[0]).shape() + " vs " +
                       m.shape());
    }
    cols += m.cols();
  }
  Matrix<T> out(rows, cols);
  std::size_t offset = 0;
  Node n;
  for (Var p : parts) {
    const auto& m = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin() + offset);
    }
    offset += m.cols();
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || node(p).needs_grad;
  }
  n.op = Op::concat_cols;
  n.owned = std::move(out);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("stack_rows: no operands");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    const auto& m = value(p);
    if (m.cols() != cols) {
      throw ShapeError("stack_rows: shape mismatch " + value(parts[0]).shape() + " vs " +
                       m.shape());
    }
    rows += m.rows();
  }
  std::vector<T> data;
  data.reserve(rows * cols);
  Node n;
  for (Var p : parts) {
    const auto& m = value(p);
    data.insert(data.end(), m.data().begin(), m.data().end());
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || node(p).needs_grad;
  }
  n.op = Op::stack_rows;
  n.owned = Matrix<T>(rows, cols, std::move(data));
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::gather_row(Var table, std::size_t row) {
  const auto& m = value(table);
  if (row >= m.rows()) {
    throw ShapeError("gather_row: row " + std::to_string(row) + " outside " + m.shape());
  }
  Node n;
  n.op = Op::gather_row;
  n.owned = Matrix<T>::row_vector(m.row(row));
  n.index = row;
  n.inputs = {table.id};
  n.needs_grad = any_needs_grad({table});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::transpose(Var a) {
  Node n;
  n.op = Op::transpose;
  n.owned = numeric::transpose(value(a));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.owned = Matrix<T>(1, 1, numeric::sum(value(a)));
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum_squares(Var a) {
  T acc{};
  for (T x : value(a).data()) acc += x * x;
  Node n;
  n.op = Op::sum_squares;
  n.owned = Matrix<T>(1, 1, acc);
  n.inputs = {a.id};
  n.needs_grad = any_needs_grad({a});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::binary_cross_entropy(Var probability, T target, T eps) {
  if (!(target >= T{0} && target <= T{1})) {
    throw ContractError("binary_cross_entropy: target outside [0, 1]");
  }
  const T p = clamp_probability(scalar(probability), eps);
  Node n;
  n.op = Op::binary_cross_entropy;
  n.owned = Matrix<T>(1, 1, -(target * std::log(p) + (T{1} - target) * std::log(T{1} - p)));
  n.scalar = eps;
  n.target = target;
  n.inputs = {probability.id};
  n.needs_grad = any_needs_grad({probability});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::cross_entropy(Var probabilities, std::size_t target, T eps) {
  const auto& probs = value(probabilities);
  if (target >= probs.size()) {
    throw ContractError("cross_entropy: target class " + std::to_string(target) +
                        " outside " + probs.shape());
  }
  Node n;
  n.op = Op::cross_entropy;
  n.owned = Matrix<T>(1, 1, -std::log(clamp_probability(probs[target], eps)));
  n.scalar = eps;
  n.index = target;
  n.inputs = {probabilities.id};
  n.needs_grad = any_needs_grad({probabilities});
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::squared_error(Var prediction, T target) {
  const T diff = scalar(prediction) - target;
  Node n;
  n.op = Op::squared_error;
  n.owned = Matrix<T>(1, 1, diff * diff);
  n.target = target;
  n.inputs = {prediction.id};
  n.needs_grad = any_needs_grad({prediction});
  return push(std::move(n));
}

template <typename T>
void Tape<T>::propagate(const Node& n, const Matrix<T>& grad,
                        std::vector<Matrix<T>>& adjoints) const {
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  auto in = [&](std::size_t k) -> const Matrix<T>& { return nodes_[n.inputs[k]].value(); };
  auto send = [&](std::size_t k, Matrix<T> delta) {
    accumulate(adjoints, n.inputs[k], std::move(delta));
  };
  const Matrix<T>& out = n.value();

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul:
      if (wants(0)) send(0, matmul_transposed(grad, in(1)));
      if (wants(1)) send(1, transposed_matmul(in(0), grad));
      break;
    case Op::linear:
      if (wants(0)) send(0, numeric::matmul(grad, in(1)));
      if (wants(1)) send(1, transposed_matmul(grad, in(0)));
      if (wants(2)) {
        Matrix<T> db(1, grad.cols());
        for (std::size_t r = 0; r < grad.rows(); ++r)
          for (std::size_t c = 0; c < grad.cols(); ++c) db[c] += grad(r, c);
        send(2, std::move(db));
      }
      break;
    case Op::add:
      if (wants(0)) send(0, grad);
      if (wants(1)) send(1, grad);
      break;
    case Op::sub:
      if (wants(0)) send(0, grad);
      if (wants(1)) send(1, numeric::scale(grad, T{-1}));
      break;
    case Op::mul:
      if (wants(0)) send(0, numeric::mul(grad, in(1)));
      if (wants(1)) send(1, numeric::mul(grad, in(0)));
      break;
    case Op::scale:
      send(0, numeric::scale(grad, n.scalar));
      break;
    case Op::tanh: {
      Matrix<T> d(out.rows(), out.cols());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = grad[i] * (T{1} - out[i] * out[i]);
      send(0, std::move(d));
      break;
    }
    case Op::sigmoid: {
      Matrix<T> d(out.rows(), out.cols());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = grad[i] * out[i] * (T{1} - out[i]);
      send(0, std::move(d));
      break;
    }
    case Op::relu: {
      const auto& x = in(0);
      Matrix<T> d(out.rows(), out.cols());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > T{0} ? grad[i] : T{0};
      send(0, std::move(d));
      break;
    }
    case Op::exp:
      send(0, numeric::mul(grad, out));
      break;
    case Op::softmax: {
      T dot{};
      for (std::size_t i = 0; i < out.size(); ++i) dot += grad[i] * out[i];
      Matrix<T> d(out.rows(), out.cols());
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (n.mask.empty() || n.mask[i]) d[i] = out[i] * (grad[i] - dot);
      }
      send(0, std::move(d));
      break;
    }
    case Op::concat_cols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto& part = in(k);
        if (wants(k)) {
          Matrix<T> d(part.rows(), part.cols());
          for (std::size_t r = 0; r < part.rows(); ++r) {
            auto src = grad.row(r).subspan(offset, part.cols());
            std::copy(src.begin(), src.end(), d.row(r).begin());
          }
          send(k, std::move(d));
        }
        offset += part.cols();
      }
      break;
    }
    case Op::stack_rows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto& part = in(k);
        if (wants(k)) {
          auto src = grad.data().subspan(offset * grad.cols(), part.size());
          send(k, Matrix<T>(part.rows(), part.cols(), std::vector<T>(src.begin(), src.end())));
        }
        offset += part.rows();
      }
      break;
    }
    case Op::gather_row: {
      const auto& table = in(0);
      Matrix<T> d(table.rows(), table.cols());
      std::copy(grad.data().begin(), grad.data().end(), d.row(n.index).begin());
      send(0, std::move(d));
      break;
    }
    case Op::transpose:
      send(0, numeric::transpose(grad));
      break;
    case Op::sum: {
      const auto& x = in(0);
      send(0, Matrix<T>(x.rows(), x.cols(), grad[0]));
      break;
    }
    case Op::sum_squares:
      send(0, numeric::scale(in(0), T{2} * grad[0]));
      break;
    case Op::binary_cross_entropy: {
      const T s = in(0)[0];
      const T eps = n.scalar;
      T d{};
      if (s > eps && s < T{1} - eps) d = (s - n.target) / (s * (T{1} - s));
      send(0, Matrix<T>(1, 1, grad[0] * d));
      break;
    }
    case Op::cross_entropy: {
      const auto& probs = in(0);
      const T p = probs[n.index];
      Matrix<T> d(probs.rows(), probs.cols());
      if (p > n.scalar && p < T{1} - n.scalar) d[n.index] = -grad[0] / p;
      send(0, std::move(d));
      break;
    }
    case Op::squared_error:
      send(0, Matrix<T>(1, 1, grad[0] * T{2} * (in(0)[0] - n.target)));
      break;
  }
}

template <typename T>
Gradients<T> Tape<T>::backward(Var loss, const std::function<void(std::size_t)>& visit) const {
  const auto& root = value(loss);
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + root.shape());
  }
  std::vector<Matrix<T>> adjoints(nodes_.size());
  adjoints[loss.id] = Matrix<T>(1, 1, T{1});

  Gradients<T> grads;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (visit) visit(i);
    const Node& n = nodes_[i];
    if (n.param) {
      auto [it, inserted] = grads.try_emplace(*n.param);
      if (inserted) it->second = Matrix<T>(n.value().rows(), n.value().cols());
      if (!adjoints[i].empty()) add_into(it->second, adjoints[i]);
      continue;
    }
    if (i > loss.id || adjoints[i].empty() || !n.needs_grad) continue;
    propagate(n, adjoints[i], adjoints);
    adjoints[i] = Matrix<T>();
  }
  return grads;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace declare::numeric
