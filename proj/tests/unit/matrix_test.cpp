#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "declare/numeric/matrix.hpp"
#include "declare/numeric/random.hpp"

namespace {

using declare::numeric::Matrix;
namespace num = declare::numeric;

Matrix<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  num::Rng rng(seed);
  return num::normal_matrix(r, c, 1.0, rng);
}

Matrix<double> triple_loop(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

TEST(Matmul, IdentityTimesColumn) {
  const auto id = Matrix<double>::from_rows({{1, 0}, {0, 1}});
  const auto v = Matrix<double>::from_rows({{3}, {4}});
  EXPECT_EQ(num::matmul(id, v), v);
}

TEST(Matmul, RowTimesColumn) {
  const auto out = num::matmul(Matrix<double>::from_rows({{1, 2}}), Matrix<double>::from_rows({{3}, {4}}));
  EXPECT_EQ(out, Matrix<double>::from_rows({{11}}));
}

TEST(Matmul, MatchesTripleLoopUpTo32) {
  std::mt19937_64 sizes(3);
  std::uniform_int_distribution<std::size_t> dim(1, 32);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = dim(sizes), k = dim(sizes), m = dim(sizes);
    const auto a = random_matrix(n, k, 100 + trial);
    const auto b = random_matrix(k, m, 200 + trial);
    const auto got = num::matmul(a, b);
    const auto want = triple_loop(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  const auto a = random_matrix(5, 4, 1);
  const auto b = random_matrix(3, 4, 2);
  const auto c = random_matrix(5, 3, 3);
  const auto abt = num::matmul_transposed(a, b);
  const auto want = triple_loop(a, num::transpose(b));
  for (std::size_t i = 0; i < abt.size(); ++i) EXPECT_NEAR(abt[i], want[i], 1e-12);
  const auto atc = num::transposed_matmul(a, c);
  const auto want2 = triple_loop(num::transpose(a), c);
  for (std::size_t i = 0; i < atc.size(); ++i) EXPECT_NEAR(atc[i], want2[i], 1e-12);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    num::matmul(Matrix<double>(2, 3), Matrix<double>(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const declare::ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("2x3"), std::string::npos) << what;
  }
}

TEST(Matmul, PropagatesNonFinite) {
  const auto a = Matrix<double>::from_rows({{0.0, 1.0}});
  const auto b = Matrix<double>::from_rows({{std::numeric_limits<double>::quiet_NaN()}, {1.0}});
  EXPECT_TRUE(std::isnan(num::matmul(a, b)[0]));
}

TEST(Elementwise, ReluDefinition) {
  EXPECT_EQ(num::relu(Matrix<double>::from_rows({{-1, 0, 2}})), Matrix<double>::from_rows({{0, 0, 2}}));
}

TEST(Elementwise, SigmoidSymmetryPointAndStability) {
  EXPECT_EQ(num::sigmoid(Matrix<double>::from_rows({{0}}))[0], 0.5);
  const auto s = num::sigmoid(Matrix<double>::from_rows({{-800.0, 800.0}}));
  EXPECT_TRUE(std::isfinite(s[0]));
  EXPECT_EQ(s[1], 1.0);
  EXPECT_GE(s[0], 0.0);
}

TEST(Elementwise, BinaryShapeMismatch) {
  EXPECT_THROW(num::add(Matrix<double>(1, 2), Matrix<double>(2, 1)), declare::ShapeError);
  EXPECT_THROW(num::mul(Matrix<double>(1, 2), Matrix<double>(1, 3)), declare::ShapeError);
}

TEST(Softmax, UniformScores) {
  const auto p = num::softmax(Matrix<double>(1, 3, 0.0));
  for (double x : p.data()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MaskedPositionIsExactlyZero) {
  const std::vector<std::uint8_t> mask = {1, 1, 0};
  const auto p = num::softmax(Matrix<double>::from_rows({{10, 10, -1e9}}), mask);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Softmax, OneTwoThreeAgainstExtendedPrecision) {
  // Reference values computed with 50-digit arithmetic.
  const auto p = num::softmax(Matrix<double>::from_rows({{1, 2, 3}}));
  EXPECT_NEAR(p[0], 0.09003057317038046, 1e-12);
  EXPECT_NEAR(p[1], 0.24472847105479765, 1e-12);
  EXPECT_NEAR(p[2], 0.66524095577482189, 1e-12);
}

TEST(Softmax, AllMaskedIsDegenerate) {
  const std::vector<std::uint8_t> mask = {0, 0};
  EXPECT_THROW(num::softmax(Matrix<double>(1, 2), mask), declare::DegenerateInputError);
}

TEST(Softmax, ShiftInvariance) {
  num::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = num::normal_matrix(1, 7, 3.0, rng);
    const auto shifted = num::add(s, Matrix<double>(1, 7, 123.25));
    const auto a = num::softmax(s);
    const auto b = num::softmax(shifted);
    for (std::size_t i = 0; i < 7; ++i) ASSERT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Matrix, CastRoundTripFromFloatIsExact) {
  const auto f = Matrix<float>::from_rows({{0.1f, -2.5f, 3.25f}});
  EXPECT_EQ(f.cast<double>().cast<float>(), f);
}

TEST(Matrix, DataLengthMustMatchShape) {
  EXPECT_THROW(Matrix<double>(2, 2, std::vector<double>{1, 2, 3}), declare::ShapeError);
}

}  // namespace
