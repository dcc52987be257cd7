#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "declare/numeric/matrix.hpp"

namespace declare::numeric {

using Rng = std::mt19937_64;

// Entries drawn from U(-limit, limit).
inline Matrix<double> uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<double> m(rows, cols);
  for (auto& x : m.data()) x = dist(rng);
  return m;
}

// Glorot/Xavier uniform for a rows×cols weight (fan_out = rows, fan_in = cols).
inline Matrix<double> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_matrix(rows, cols, limit, rng);
}

inline Matrix<double> normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<double> m(rows, cols);
  for (auto& x : m.data()) x = dist(rng);
  return m;
}

// Derives an independent stream seed from a base seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace declare::numeric
