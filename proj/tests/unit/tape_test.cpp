#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "declare/numeric/random.hpp"
#include "declare/numeric/tape.hpp"

namespace {

using declare::numeric::Gradients;
using declare::numeric::Matrix;
using declare::numeric::ParamId;
using declare::numeric::Tape;
using declare::numeric::Var;
namespace num = declare::numeric;

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Central-difference check of every entry of every parameter.
double max_relative_error(std::vector<Matrix<double>> params, const Builder& build, double h = 1e-5) {
  auto evaluate = [&](const std::vector<Matrix<double>>& ps) {
    Tape<double> tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < ps.size(); ++i) vars.push_back(tape.parameter(ps[i], ParamId{i}));
    return tape.scalar(build(tape, vars));
  };
  Tape<double> tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(params[i], ParamId{i}));
  const auto grads = tape.backward(build(tape, vars));

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double original = params[p][k];
      params[p][k] = original + h;
      const double up = evaluate(params);
      params[p][k] = original - h;
      const double down = evaluate(params);
      params[p][k] = original;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.at(ParamId{p})[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

Matrix<double> rnd(std::size_t r, std::size_t c, std::uint64_t seed, double sd = 1.0) {
  num::Rng rng(seed);
  return num::normal_matrix(r, c, sd, rng);
}

TEST(Backward, LinearSumGivesBroadcastOfX) {
  const auto w = rnd(3, 4, 1);
  const auto x = rnd(4, 1, 2);
  Tape<double> tape;
  const Var wv = tape.parameter(w, ParamId{0});
  const Var loss = tape.sum(tape.matmul(wv, tape.constant(x)));
  const auto g = tape.backward(loss).at(ParamId{0});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(g(r, c), x[c]);
}

TEST(Backward, SigmoidOfDotProduct) {
  const auto w = rnd(1, 3, 3);
  const auto x = rnd(3, 1, 4);
  Tape<double> tape;
  const Var loss = tape.sigmoid(tape.matmul(tape.parameter(w, ParamId{7}), tape.constant(x)));
  const double s = tape.scalar(loss);
  const auto g = tape.backward(loss).at(ParamId{7});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], s * (1 - s) * x[i], 1e-15);
}

TEST(Backward, TanhDerivativeAtPointThree) {
  const auto x = Matrix<double>::from_rows({{0.3}});
  Tape<double> tape;
  const Var loss = tape.sum(tape.tanh(tape.parameter(x, ParamId{0})));
  const double analytic = tape.backward(loss).at(ParamId{0})[0];
  const double h = 1e-6;
  const double numeric = (std::tanh(0.3 + h) - std::tanh(0.3 - h)) / (2 * h);
  EXPECT_NEAR(analytic, numeric, 1e-7);
}

TEST(Backward, EveryOpMatchesFiniteDifferences) {
  const std::vector<Matrix<double>> params = {rnd(3, 4, 10), rnd(2, 4, 11), rnd(1, 3, 12), rnd(2, 3, 13, 0.5)};
  const Builder build = [](Tape<double>& t, const std::vector<Var>& p) {
    const Var lin = t.linear(p[1], p[0], p[2]);                 // 2x3
    const Var act = t.add(t.tanh(lin), t.sigmoid(p[3]));
    const Var gated = t.mul(act, t.relu(t.add(lin, t.constant(Matrix<double>(2, 3, 0.7)))));
    const Var e = t.scale(t.exp(t.scale(gated, 0.3)), 0.5);
    const std::array<Var, 2> cols = {e, t.sub(p[3], gated)};
    const Var wide = t.concat_cols(cols);                       // 2x6
    const std::array<Var, 2> rows = {t.gather_row(wide, 1), t.gather_row(wide, 0)};
    const Var stacked = t.stack_rows(rows);                     // 2x6
    const Var probs = t.softmax(t.transpose(t.gather_row(stacked, 0)));
    const Var ce = t.cross_entropy(t.transpose(probs), 2, 1e-7);
    const Var bce = t.binary_cross_entropy(t.sigmoid(t.sum(t.gather_row(stacked, 1))), 1.0, 1e-7);
    const Var se = t.squared_error(t.sum(p[3]), 0.25);
    const Var l2 = t.sum_squares(p[0]);
    return t.add(t.add(ce, bce), t.add(se, t.scale(l2, 0.1)));
  };
  EXPECT_LT(max_relative_error(params, build), 1e-6);
}

TEST(Backward, MaskedSoftmaxGradient) {
  const std::vector<Matrix<double>> params = {rnd(5, 1, 20)};
  const Builder build = [](Tape<double>& t, const std::vector<Var>& p) {
    const Var a = t.softmax(p[0], {1, 0, 1, 1, 0});
    return t.sum(t.mul(a, t.constant(Matrix<double>::from_rows({{1}, {2}, {3}, {4}, {5}}))));
  };
  EXPECT_LT(max_relative_error(params, build), 1e-7);
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  const auto a = rnd(2, 2, 30);
  const auto b = rnd(2, 2, 31);
  Tape<double> tape;
  const Var av = tape.parameter(a, ParamId{0});
  tape.parameter(b, ParamId{1});
  const auto grads = tape.backward(tape.sum(av));
  ASSERT_TRUE(grads.contains(ParamId{1}));
  EXPECT_EQ(grads.at(ParamId{1}), Matrix<double>(2, 2));
}

TEST(Backward, VisitsOperationsInReverseOrder) {
  Tape<double> tape;
  const Matrix<double> value(1, 1, 0.5);
  const Var x = tape.parameter(value, ParamId{0});
  Var y = tape.tanh(x);
  y = tape.exp(y);
  const Var loss = tape.sum(y);
  std::vector<std::size_t> visited;
  tape.backward(loss, [&visited](std::size_t node) { visited.push_back(node); });
  ASSERT_FALSE(visited.empty());
  for (std::size_t i = 1; i < visited.size(); ++i) EXPECT_GT(visited[i - 1], visited[i]);
  EXPECT_EQ(visited.front(), loss.id);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  const Matrix<double> value(2, 1, 1.0);
  const Var x = tape.parameter(value, ParamId{0});
  EXPECT_THROW(tape.backward(x), declare::ContractError);
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  const Matrix<double> value(1, 1, 0.0);
  const Var x = tape.parameter(value, ParamId{0});
  EXPECT_EQ(tape.backward(tape.sum(tape.relu(x))).at(ParamId{0})[0], 0.0);
}

TEST(Backward, SharedParameterAccumulates) {
  Tape<double> tape;
  const auto w = Matrix<double>::from_rows({{2.0}});
  const Var a = tape.parameter(w, ParamId{0});
  const Var b = tape.parameter(w, ParamId{0});
  const Var loss = tape.sum(tape.add(tape.mul(a, a), b));
  EXPECT_DOUBLE_EQ(tape.backward(loss).at(ParamId{0})[0], 5.0);
}

TEST(Tape, FloatPrecisionRunsTheSameGraph) {
  Tape<float> tape;
  const auto w = Matrix<float>::from_rows({{0.5f, -0.25f}});
  const Var loss = tape.sum_squares(tape.parameter(w, ParamId{0}));
  const auto g = tape.backward(loss).at(ParamId{0});
  EXPECT_FLOAT_EQ(g[0], 1.0f);
  EXPECT_FLOAT_EQ(g[1], -0.5f);
}

}  // namespace
