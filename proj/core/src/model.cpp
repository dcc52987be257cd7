#include "declare/model.hpp"

#include <algorithm>
#include <random>

#include "declare/errors.hpp"

namespace declare::model {

namespace {

constexpr std::array<std::string_view, kGroupCount> kGroupNames = {
    "lstm.forward.w_input",  "lstm.forward.b_input",  "lstm.forward.w_forget",
    "lstm.forward.b_forget", "lstm.forward.w_output", "lstm.forward.b_output",
    "lstm.forward.w_cell",   "lstm.forward.b_cell",   "lstm.backward.w_input",
    "lstm.backward.b_input", "lstm.backward.w_forget", "lstm.backward.b_forget",
    "lstm.backward.w_output", "lstm.backward.b_output", "lstm.backward.w_cell",
    "lstm.backward.b_cell",  "attention.w",           "attention.b",
    "fusion.w",              "fusion.b",              "dense.w",
    "dense.b",               "output.w",              "output.b",
    "sources.claim",         "sources.article",
};

template <typename T>
bool active(std::span<const std::uint8_t> mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

std::size_t count_active(std::span<const std::uint8_t> mask, std::size_t length) {
  if (mask.empty()) return length;
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

template <typename T>
std::vector<T> flatten(const Matrix<T>& m) {
  return {m.data().begin(), m.data().end()};
}

template <typename T>
Matrix<T> dropout_mask(std::size_t cols, const DropoutSampler& sampler) {
  const T keep_scale = static_cast<T>(1.0 / (1.0 - sampler.rate));
  std::bernoulli_distribution drop(sampler.rate);
  Matrix<T> mask(1, cols);
  for (auto& x : mask.data()) x = drop(*sampler.rng) ? T{0} : keep_scale;
  return mask;
}

struct LstmGroups {
  Group w_input, b_input, w_forget, b_forget, w_output, b_output, w_cell, b_cell;
};

constexpr LstmGroups kForward{Group::fwd_w_input,  Group::fwd_b_input, Group::fwd_w_forget,
                              Group::fwd_b_forget, Group::fwd_w_output, Group::fwd_b_output,
                              Group::fwd_w_cell,   Group::fwd_b_cell};
constexpr LstmGroups kBackward{Group::bwd_w_input,  Group::bwd_b_input, Group::bwd_w_forget,
                               Group::bwd_b_forget, Group::bwd_w_output, Group::bwd_b_output,
                               Group::bwd_w_cell,   Group::bwd_b_cell};

// Runs one direction over `order` (token indices) and writes h per position.
template <typename T>
void run_direction(Tape<T>& tape, const ParamVars& p, const LstmGroups& g, const Matrix<T>& tokens,
                   std::span<const std::size_t> order, std::vector<Var>& states, Var zero_state) {
  Var h = zero_state;
  Var c = zero_state;
  for (std::size_t t : order) {
    const Var x = tape.constant(Matrix<T>::row_vector(tokens.row(t)));
    const std::array<Var, 2> parts{x, h};
    const Var xh = tape.concat_cols(parts);
    const Var i = tape.sigmoid(tape.linear(xh, p[g.w_input], p[g.b_input]));
    const Var f = tape.sigmoid(tape.linear(xh, p[g.w_forget], p[g.b_forget]));
    const Var o = tape.sigmoid(tape.linear(xh, p[g.w_output], p[g.b_output]));
    const Var candidate = tape.tanh(tape.linear(xh, p[g.w_cell], p[g.b_cell]));
    c = tape.add(tape.mul(f, c), tape.mul(i, candidate));
    h = tape.mul(o, tape.tanh(c));
    states[t] = h;
  }
}

}  // namespace

void Hyperparams::validate() const {
  if (word_dim == 0 || article_source_dim == 0 || lstm_hidden == 0 || dense_size == 0) {
    throw ContractError("hyperparameters: dimensions must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ContractError("hyperparameters: dropout must lie in [0, 1)");
  }
  if (head == Head::categorical && classes < 2) {
    throw ContractError("hyperparameters: a categorical head needs >= 2 classes");
  }
}

std::string_view group_name(std::size_t group) { return kGroupNames.at(group); }

template <typename T>
std::array<Matrix<T>*, kGroupCount> ModelParams<T>::groups() {
  return {&forward.w_input,   &forward.b_input,   &forward.w_forget,  &forward.b_forget,
          &forward.w_output,  &forward.b_output,  &forward.w_cell,    &forward.b_cell,
          &backward.w_input,  &backward.b_input,  &backward.w_forget, &backward.b_forget,
          &backward.w_output, &backward.b_output, &backward.w_cell,   &backward.b_cell,
          &attention_w,       &attention_b,       &fusion_w,          &fusion_b,
          &dense_w,           &dense_b,           &output_w,          &output_b,
          &claim_sources,     &article_sources};
}

template <typename T>
std::array<const Matrix<T>*, kGroupCount> ModelParams<T>::groups() const {
  auto mutable_groups = const_cast<ModelParams*>(this)->groups();
  std::array<const Matrix<T>*, kGroupCount> out{};
  std::copy(mutable_groups.begin(), mutable_groups.end(), out.begin());
  return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  auto src = groups();
  auto dst = out.groups();
  for (std::size_t i = 0; i < kGroupCount; ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

template <typename T>
void ModelParams<T>::check_shapes(const Hyperparams& hyper) const {
  const std::size_t d = hyper.word_dim;
  const std::size_t h = hyper.lstm_hidden;
  const std::size_t f = hyper.dense_size;
  auto expect = [](const Matrix<T>& m, std::size_t rows, std::size_t cols, std::size_t group) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError(std::string(group_name(group)) + ": expected " +
                       Matrix<T>::shape_string(rows, cols) + ", found " + m.shape());
    }
  };
  auto g = groups();
  for (std::size_t dir = 0; dir < 2; ++dir) {
    for (std::size_t gate = 0; gate < 4; ++gate) {
      const std::size_t base = dir * 8 + gate * 2;
      expect(*g[base], h, d + h, base);
      expect(*g[base + 1], 1, h, base + 1);
    }
  }
  auto at = [](Group grp) { return static_cast<std::size_t>(grp); };
  expect(attention_w, 1, 2 * d, at(Group::attention_w));
  expect(attention_b, 1, 1, at(Group::attention_b));
  expect(fusion_w, f, hyper.fusion_input_size(), at(Group::fusion_w));
  expect(fusion_b, 1, f, at(Group::fusion_b));
  expect(dense_w, f, f, at(Group::dense_w));
  expect(dense_b, 1, f, at(Group::dense_b));
  expect(output_w, hyper.output_size(), f, at(Group::output_w));
  expect(output_b, 1, hyper.output_size(), at(Group::output_b));
  if (hyper.uses_claim_source()) {
    if (claim_sources.rows() == 0 || claim_sources.cols() != hyper.claim_source_dim) {
      throw ShapeError("sources.claim: expected N x " + std::to_string(hyper.claim_source_dim) +
                       ", found " + claim_sources.shape());
    }
  } else if (!claim_sources.empty()) {
    throw ShapeError("sources.claim: present but the model uses no claim sources");
  }
  if (article_sources.rows() == 0 || article_sources.cols() != hyper.article_source_dim) {
    throw ShapeError("sources.article: expected N x " + std::to_string(hyper.article_source_dim) +
                     ", found " + article_sources.shape());
  }
}

ModelParams<double> init_params(const Hyperparams& hyper, std::uint64_t seed,
                                const Matrix<double>& claim_sources,
                                const Matrix<double>& article_sources) {
  hyper.validate();
  numeric::Rng rng(seed);
  const std::size_t d = hyper.word_dim;
  const std::size_t h = hyper.lstm_hidden;
  const std::size_t f = hyper.dense_size;

  auto init_direction = [&](LstmDirection<double>& dir) {
    dir.w_input = numeric::glorot_uniform(h, d + h, rng);
    dir.w_forget = numeric::glorot_uniform(h, d + h, rng);
    dir.w_output = numeric::glorot_uniform(h, d + h, rng);
    dir.w_cell = numeric::glorot_uniform(h, d + h, rng);
    dir.b_input = Matrix<double>(1, h);
    dir.b_forget = Matrix<double>(1, h, 1.0);
    dir.b_output = Matrix<double>(1, h);
    dir.b_cell = Matrix<double>(1, h);
  };

  ModelParams<double> p;
  init_direction(p.forward);
  init_direction(p.backward);
  p.attention_w = numeric::glorot_uniform(1, 2 * d, rng);
  p.attention_b = Matrix<double>(1, 1);
  p.fusion_w = numeric::glorot_uniform(f, hyper.fusion_input_size(), rng);
  p.fusion_b = Matrix<double>(1, f);
  p.dense_w = numeric::glorot_uniform(f, f, rng);
  p.dense_b = Matrix<double>(1, f);
  p.output_w = numeric::glorot_uniform(hyper.output_size(), f, rng);
  p.output_b = Matrix<double>(1, hyper.output_size());
  if (hyper.uses_claim_source()) p.claim_sources = claim_sources;
  p.article_sources = article_sources;
  p.check_shapes(hyper);
  return p;
}

template <typename T>
ParamVars bind(Tape<T>& tape, const ModelParams<T>& params) {
  ParamVars out;
  auto groups = params.groups();
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    out.vars[i] = tape.parameter(*groups[i], numeric::ParamId{i});
  }
  return out;
}

template <typename T>
EncodedClaim<T> encode_claim(const corpus::ClaimInstance& instance,
                             const embeddings::WordEmbeddings& words,
                             const embeddings::SourceVocabulary* claim_sources,
                             const embeddings::SourceVocabulary& article_sources) {
  EncodedClaim<T> out;
  out.id = instance.id;
  const auto mean = embeddings::claim_mean(instance.claim, words);
  out.claim_mean = Matrix<T>(1, mean.size(), std::vector<T>(mean.begin(), mean.end()));
  if (claim_sources) {
    out.source_row = claim_sources->resolve(instance.claim_source.value_or(""));
  }
  out.label = instance.label;
  for (const auto& article : instance.articles) {
    if (article.tokens.empty()) throw DegenerateInputError("encode: article has no tokens");
    EncodedArticle<T> enc;
    enc.tokens = Matrix<T>(article.tokens.size(), words.dim());
    for (std::size_t k = 0; k < article.tokens.size(); ++k) {
      auto v = words.lookup(article.tokens[k]);
      std::copy(v.begin(), v.end(), enc.tokens.row(k).begin());
    }
    enc.source_row = article_sources.resolve(article.source);
    out.articles.push_back(std::move(enc));
  }
  return out;
}

template <typename T>
Var bilstm_encode(Tape<T>& tape, const ParamVars& p, const Matrix<T>& tokens,
                  std::span<const std::uint8_t> mask) {
  const std::size_t k = tokens.rows();
  if (k == 0) throw DegenerateInputError("bilstm_encode: empty sequence");
  if (!mask.empty() && mask.size() != k) {
    throw ShapeError("bilstm_encode: mask length " + std::to_string(mask.size()) +
                     " for sequence of " + std::to_string(k));
  }
  const std::size_t hidden = tape.value(p[Group::fwd_b_input]).cols();
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < k; ++t) {
    if (active<T>(mask, t)) order.push_back(t);
  }
  if (order.empty()) throw DegenerateInputError("bilstm_encode: every token is masked");

  const Var zero = tape.constant(Matrix<T>(1, hidden));
  std::vector<Var> forward(k, zero);
  std::vector<Var> backward(k, zero);
  run_direction(tape, p, kForward, tokens, order, forward, zero);
  std::reverse(order.begin(), order.end());
  run_direction(tape, p, kBackward, tokens, order, backward, zero);

  const Var fwd = tape.stack_rows(forward);
  const Var bwd = tape.stack_rows(backward);
  const std::array<Var, 2> halves{fwd, bwd};
  return tape.concat_cols(halves);
}

template <typename T>
AttentionVars attend(Tape<T>& tape, const ParamVars& p, const Matrix<T>& tokens,
                     const Matrix<T>& claim_mean, std::span<const std::uint8_t> mask) {
  const std::size_t k = tokens.rows();
  const std::size_t d = tokens.cols();
  if (claim_mean.rows() != 1 || claim_mean.cols() != d) {
    throw ShapeError("attend: claim mean " + claim_mean.shape() + " vs tokens " + tokens.shape());
  }
  Matrix<T> joined(k, 2 * d);
  for (std::size_t t = 0; t < k; ++t) {
    auto row = joined.row(t);
    std::copy(tokens.row(t).begin(), tokens.row(t).end(), row.begin());
    std::copy(claim_mean.data().begin(), claim_mean.data().end(), row.begin() + d);
  }
  AttentionVars out;
  const Var x = tape.constant(std::move(joined));
  out.scores = tape.tanh(tape.linear(x, p[Group::attention_w], p[Group::attention_b]));
  out.weights = tape.softmax(out.scores, std::vector<std::uint8_t>(mask.begin(), mask.end()));
  return out;
}

template <typename T>
Var article_vector(Tape<T>& tape, Var hidden, Var weights, std::size_t active_tokens) {
  if (tape.value(hidden).rows() != tape.value(weights).rows()) {
    throw ShapeError("article_vector: hidden " + tape.value(hidden).shape() + " vs weights " +
                     tape.value(weights).shape());
  }
  if (active_tokens == 0) throw DegenerateInputError("article_vector: no active tokens");
  const Var weighted = tape.matmul(tape.transpose(weights), hidden);
  return tape.scale(weighted, T{1} / static_cast<T>(active_tokens));
}

template <typename T>
ScoreVars score_article(Tape<T>& tape, const ParamVars& p, Head head, Var g,
                        std::optional<Var> claim_source, Var article_source,
                        const DropoutSampler* dropout) {
  std::vector<Var> parts{g};
  if (claim_source) parts.push_back(*claim_source);
  parts.push_back(article_source);
  const Var joined = tape.concat_cols(parts);

  auto drop = [&](Var v) {
    if (!dropout || !dropout->rng || dropout->rate <= 0.0) return v;
    return tape.mul(v, tape.constant(dropout_mask<T>(tape.value(v).cols(), *dropout)));
  };

  ScoreVars out;
  out.d1 = tape.relu(tape.linear(joined, p[Group::fusion_w], p[Group::fusion_b]));
  out.d2 = tape.relu(tape.linear(drop(out.d1), p[Group::dense_w], p[Group::dense_b]));
  out.logits = tape.linear(drop(out.d2), p[Group::output_w], p[Group::output_b]);
  switch (head) {
    case Head::binary:
      out.output = tape.sigmoid(out.logits);
      break;
    case Head::categorical:
      out.output = tape.softmax(out.logits);
      break;
    case Head::regression:
      out.output = out.logits;
      break;
  }
  return out;
}

template <typename T>
ArticleVars forward_article(Tape<T>& tape, const ParamVars& p, const Hyperparams& hyper,
                            const EncodedClaim<T>& claim, const EncodedArticle<T>& article,
                            const DropoutSampler* dropout) {
  ArticleVars out;
  out.hidden = bilstm_encode(tape, p, article.tokens, article.mask);
  out.attention = attend(tape, p, article.tokens, claim.claim_mean, article.mask);
  out.g = article_vector(tape, out.hidden, out.attention.weights,
                         count_active(article.mask, article.tokens.rows()));
  std::optional<Var> cs;
  if (hyper.uses_claim_source()) {
    if (!claim.source_row) throw ContractError("forward: model expects a claim source row");
    cs = tape.gather_row(p[Group::claim_sources], *claim.source_row);
  }
  const Var as = tape.gather_row(p[Group::article_sources], article.source_row);
  out.score = score_article(tape, p, hyper.head, out.g, cs, as, dropout);
  return out;
}

template <typename T>
ForwardTrace<T> collect_trace(const Tape<T>& tape, const ArticleVars& vars,
                              std::span<const std::uint8_t> mask) {
  ForwardTrace<T> trace;
  trace.hidden = tape.value(vars.hidden);
  trace.attention_scores = flatten(tape.value(vars.attention.scores));
  trace.attention_weights = flatten(tape.value(vars.attention.weights));
  trace.article_vector = flatten(tape.value(vars.g));
  trace.d1 = flatten(tape.value(vars.score.d1));
  trace.d2 = flatten(tape.value(vars.score.d2));
  trace.output = flatten(tape.value(vars.score.output));
  trace.mask.assign(mask.begin(), mask.end());
  return trace;
}

template <typename T>
ForwardTrace<T> run_article(const ModelParams<T>& params, const Hyperparams& hyper,
                            const EncodedClaim<T>& claim, const EncodedArticle<T>& article) {
  Tape<T> tape;
  const ParamVars p = bind(tape, params);
  const ArticleVars vars = forward_article(tape, p, hyper, claim, article);
  return collect_trace(tape, vars, article.mask);
}

// Correctly rounded sum (Shewchuk's exact partials), so the mean does not
// depend on article order.
double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t kept = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[kept++] = lo;
      x = hi;
    }
    partials.resize(kept);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  // Sum the non-overlapping partials from the top, correcting the final
  // round-half-even case.
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

double aggregate(std::span<const double> scores) {
  if (scores.empty()) throw DegenerateInputError("aggregate: claim has no article scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DegenerateInputError("aggregate: non-finite article score");
  }
  return exact_sum(scores) / static_cast<double>(scores.size());
}

std::vector<double> aggregate_outputs(std::span<const std::vector<double>> outputs) {
  if (outputs.empty()) throw DegenerateInputError("aggregate: claim has no article scores");
  const std::size_t width = outputs.front().size();
  std::vector<double> column(outputs.size());
  std::vector<double> out(width);
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t m = 0; m < outputs.size(); ++m) {
      if (outputs[m].size() != width) throw ShapeError("aggregate: ragged article outputs");
      column[m] = outputs[m][j];
    }
    out[j] = aggregate(column);
  }
  return out;
}

template <typename T>
ClaimPrediction predict_claim(const ModelParams<T>& params, const Hyperparams& hyper,
                              const EncodedClaim<T>& claim) {
  ClaimPrediction out;
  for (const auto& article : claim.articles) {
    const auto trace = run_article(params, hyper, claim, article);
    out.article_outputs.emplace_back(trace.output.begin(), trace.output.end());
  }
  out.credibility = aggregate_outputs(out.article_outputs);
  return out;
}

#define DECLARE_INSTANTIATE(T)                                                                   \
  template struct ModelParams<T>;                                                                \
  template ParamVars bind(Tape<T>&, const ModelParams<T>&);                                      \
  template EncodedClaim<T> encode_claim(const corpus::ClaimInstance&,                            \
                                        const embeddings::WordEmbeddings&,                       \
                                        const embeddings::SourceVocabulary*,                     \
                                        const embeddings::SourceVocabulary&);                    \
  template Var bilstm_encode(Tape<T>&, const ParamVars&, const Matrix<T>&,                       \
                             std::span<const std::uint8_t>);                                     \
  template AttentionVars attend(Tape<T>&, const ParamVars&, const Matrix<T>&, const Matrix<T>&,  \
                                std::span<const std::uint8_t>);                                  \
  template Var article_vector(Tape<T>&, Var, Var, std::size_t);                                  \
  template ScoreVars score_article(Tape<T>&, const ParamVars&, Head, Var, std::optional<Var>,    \
                                   Var, const DropoutSampler*);                                  \
  template ArticleVars forward_article(Tape<T>&, const ParamVars&, const Hyperparams&,           \
                                       const EncodedClaim<T>&, const EncodedArticle<T>&,         \
                                       const DropoutSampler*);                                   \
  template ForwardTrace<T> collect_trace(const Tape<T>&, const ArticleVars&,                     \
                                         std::span<const std::uint8_t>);                         \
  template ForwardTrace<T> run_article(const ModelParams<T>&, const Hyperparams&,                \
                                       const EncodedClaim<T>&, const EncodedArticle<T>&);        \
  template ClaimPrediction predict_claim(const ModelParams<T>&, const Hyperparams&,              \
                                         const EncodedClaim<T>&);

DECLARE_INSTANTIATE(float)
DECLARE_INSTANTIATE(double)

#undef DECLARE_INSTANTIATE

template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace declare::model
