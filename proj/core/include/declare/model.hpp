#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "declare/corpus.hpp"
#include "declare/embeddings.hpp"
#include "declare/numeric/matrix.hpp"
#include "declare/numeric/random.hpp"
#include "declare/numeric/tape.hpp"

namespace declare::model {

using numeric::Matrix;
using numeric::Tape;
using numeric::Var;

enum class Head { binary, categorical, regression };

struct Hyperparams {
  std::size_t word_dim = 100;
  std::size_t claim_source_dim = 0;  // 0 when the dataset has no claim sources
  std::size_t article_source_dim = 8;
  std::size_t lstm_hidden = 64;      // per direction
  std::size_t dense_size = 32;
  double dropout = 0.5;
  Head head = Head::binary;
  std::size_t classes = 2;           // width of the categorical head

  void validate() const;
  bool uses_claim_source() const noexcept { return claim_source_dim > 0; }
  std::size_t output_size() const noexcept { return head == Head::categorical ? classes : 1; }
  std::size_t fusion_input_size() const noexcept {
    return 2 * lstm_hidden + claim_source_dim + article_source_dim;
  }
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// Gate weights map [x_t ⊕ h_{t-1}] (d + H) to H; biases are 1×H rows.
template <typename T>
struct LstmDirection {
  Matrix<T> w_input, b_input;
  Matrix<T> w_forget, b_forget;
  Matrix<T> w_output, b_output;
  Matrix<T> w_cell, b_cell;
  friend bool operator==(const LstmDirection&, const LstmDirection&) = default;
};

// Parameter groups, in the order used for ParamIds, optimizer state and the
// checkpoint layout.
enum class Group : std::size_t {
  fwd_w_input, fwd_b_input, fwd_w_forget, fwd_b_forget,
  fwd_w_output, fwd_b_output, fwd_w_cell, fwd_b_cell,
  bwd_w_input, bwd_b_input, bwd_w_forget, bwd_b_forget,
  bwd_w_output, bwd_b_output, bwd_w_cell, bwd_b_cell,
  attention_w, attention_b,
  fusion_w, fusion_b,
  dense_w, dense_b,
  output_w, output_b,
  claim_sources, article_sources,
};
inline constexpr std::size_t kGroupCount = 26;

std::string_view group_name(std::size_t group);

template <typename T>
struct ModelParams {
  LstmDirection<T> forward;
  LstmDirection<T> backward;
  Matrix<T> attention_w;  // 1×2d
  Matrix<T> attention_b;  // 1×1
  Matrix<T> fusion_w;     // F×(2H + d_cs + d_as)
  Matrix<T> fusion_b;
  Matrix<T> dense_w;      // F×F
  Matrix<T> dense_b;
  Matrix<T> output_w;     // (K or 1)×F
  Matrix<T> output_b;
  Matrix<T> claim_sources;    // |CS|×d_cs, 0×0 when unused
  Matrix<T> article_sources;  // |AS|×d_as

  std::array<Matrix<T>*, kGroupCount> groups();
  std::array<const Matrix<T>*, kGroupCount> groups() const;
  Matrix<T>& group(Group g) { return *groups()[static_cast<std::size_t>(g)]; }
  const Matrix<T>& group(Group g) const { return *groups()[static_cast<std::size_t>(g)]; }

  template <typename U>
  ModelParams<U> cast() const;

  // Throws ShapeError if any group disagrees with `hyper`.
  void check_shapes(const Hyperparams& hyper) const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Glorot-uniform weights, zero biases except the LSTM forget gate (1.0). The
// source tables are copied in as given.
ModelParams<double> init_params(const Hyperparams& hyper, std::uint64_t seed,
                                const Matrix<double>& claim_sources,
                                const Matrix<double>& article_sources);

// One Var per parameter group, registered on a tape.
struct ParamVars {
  std::array<Var, kGroupCount> vars{};
  Var operator[](Group g) const { return vars[static_cast<std::size_t>(g)]; }
};

template <typename T>
ParamVars bind(Tape<T>& tape, const ModelParams<T>& params);

// Embedded inputs for one article: k×d token vectors and an optional mask
// (empty = every token active).
template <typename T>
struct EncodedArticle {
  Matrix<T> tokens;
  std::vector<std::uint8_t> mask;
  std::size_t source_row = 0;
};

template <typename T>
struct EncodedClaim {
  std::string id;
  Matrix<T> claim_mean;  // 1×d
  std::optional<std::size_t> source_row;
  std::vector<EncodedArticle<T>> articles;
  std::optional<double> label;
};

template <typename T>
EncodedClaim<T> encode_claim(const corpus::ClaimInstance& instance,
                             const embeddings::WordEmbeddings& words,
                             const embeddings::SourceVocabulary* claim_sources,
                             const embeddings::SourceVocabulary& article_sources);

// Inverted dropout. A null sampler means inference: no units are dropped.
struct DropoutSampler {
  numeric::Rng* rng = nullptr;
  double rate = 0.0;
};

// Forward (left→right) and backward (right→left) LSTM over the active tokens,
// from zero states. Returns k×2H rows [→h_k, ←h_k]; masked rows are zero.
template <typename T>
Var bilstm_encode(Tape<T>& tape, const ParamVars& p, const Matrix<T>& tokens,
                  std::span<const std::uint8_t> mask = {});

struct AttentionVars {
  Var scores;   // k×1, a'_k = tanh(W_a [a_k ⊕ c̄] + b_a)
  Var weights;  // k×1, masked softmax of the scores
};

template <typename T>
AttentionVars attend(Tape<T>& tape, const ParamVars& p, const Matrix<T>& tokens,
                     const Matrix<T>& claim_mean, std::span<const std::uint8_t> mask = {});

// g = (1/k) Σ α_k h_k with k the number of active tokens.
template <typename T>
Var article_vector(Tape<T>& tape, Var hidden, Var weights, std::size_t active_tokens);

struct ScoreVars {
  Var d1;
  Var d2;
  Var logits;
  Var output;  // sigmoid probability, class distribution or raw score
};

template <typename T>
ScoreVars score_article(Tape<T>& tape, const ParamVars& p, Head head, Var g,
                        std::optional<Var> claim_source, Var article_source,
                        const DropoutSampler* dropout = nullptr);

struct ArticleVars {
  Var hidden;
  AttentionVars attention;
  Var g;
  ScoreVars score;
};

template <typename T>
ArticleVars forward_article(Tape<T>& tape, const ParamVars& p, const Hyperparams& hyper,
                            const EncodedClaim<T>& claim, const EncodedArticle<T>& article,
                            const DropoutSampler* dropout = nullptr);

// Per-article intermediates retained for explanation.
template <typename T>
struct ForwardTrace {
  Matrix<T> hidden;                    // k×2H
  std::vector<T> attention_scores;     // a'_k
  std::vector<T> attention_weights;    // α_k
  std::vector<T> article_vector;       // g
  std::vector<T> d1;
  std::vector<T> d2;
  std::vector<T> output;               // s (1 entry) or class distribution
  std::vector<std::uint8_t> mask;
};

template <typename T>
ForwardTrace<T> collect_trace(const Tape<T>& tape, const ArticleVars& vars,
                              std::span<const std::uint8_t> mask);

// Inference for one article (dropout off).
template <typename T>
ForwardTrace<T> run_article(const ModelParams<T>& params, const Hyperparams& hyper,
                            const EncodedClaim<T>& claim, const EncodedArticle<T>& article);

// Correctly rounded sum; independent of the order of `values`.
double exact_sum(std::span<const double> values);

// cred(C) = (1/M) Σ s_m, bit-identical under any permutation of the scores.
double aggregate(std::span<const double> scores);

// Component-wise mean of per-article outputs (class distributions or scalars).
std::vector<double> aggregate_outputs(std::span<const std::vector<double>> outputs);

struct ClaimPrediction {
  std::vector<std::vector<double>> article_outputs;
  std::vector<double> credibility;  // 1 entry, or K for a categorical head
};

template <typename T>
ClaimPrediction predict_claim(const ModelParams<T>& params, const Hyperparams& hyper,
                              const EncodedClaim<T>& claim);

}  // namespace declare::model
