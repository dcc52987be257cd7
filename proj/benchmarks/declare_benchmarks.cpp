#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "declare/corpus.hpp"
#include "declare/model.hpp"
#include "declare/numeric/random.hpp"
#include "declare/training.hpp"

namespace {

using namespace declare;
using numeric::Matrix;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numeric::Rng rng(1);
  const auto a = numeric::normal_matrix(n, n, 1.0, rng);
  const auto b = numeric::normal_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(numeric::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

// Default-sized model (d=100, H=64, F=32) on one article of `range(0)` tokens.
struct Setup {
  model::Hyperparams hyper;
  model::ModelParams<double> params;
  model::EncodedClaim<double> claim;
};

Setup make_setup(std::size_t tokens) {
  Setup s;
  s.hyper.dropout = 0.0;
  numeric::Rng rng(2);
  s.params = model::init_params(s.hyper, 2, {}, numeric::uniform_matrix(10, s.hyper.article_source_dim, 0.05, rng));
  s.claim.claim_mean = numeric::normal_matrix(1, s.hyper.word_dim, 1.0, rng);
  s.claim.label = 1.0;
  model::EncodedArticle<double> article;
  article.tokens = numeric::normal_matrix(tokens, s.hyper.word_dim, 1.0, rng);
  article.source_row = 3;
  s.claim.articles.push_back(std::move(article));
  return s;
}

void BM_ForwardArticle(benchmark::State& state) {
  const auto s = make_setup(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(model::run_article(s.params, s.hyper, s.claim, s.claim.articles[0]));
  }
}
BENCHMARK(BM_ForwardArticle)->Arg(25)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_TrainingStep(benchmark::State& state) {
  auto s = make_setup(static_cast<std::size_t>(state.range(0)));
  auto groups = s.params.groups();
  const std::span<Matrix<double>* const> span(groups);
  auto adam = training::make_optimizer_state<double>(span);
  const training::TrainConfig config;
  for (auto _ : state) {
    numeric::Tape<double> tape;
    const auto p = model::bind(tape, s.params);
    const auto vars = model::forward_article(tape, p, s.hyper, s.claim, s.claim.articles[0]);
    auto loss = training::prediction_loss(tape, vars.score.output, s.hyper.head, 1.0);
    loss = tape.add(loss, training::l2_penalty(tape, p, config.l2_lambda));
    training::adam_step<double>(span, tape.backward(loss), adam, config);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ExtractSnippet(benchmark::State& state) {
  const std::size_t dim = 100;
  numeric::Rng rng(3);
  embeddings::Vocabulary vocab;
  for (int i = 0; i < 2000; ++i) vocab.add("w" + std::to_string(i));
  const embeddings::WordEmbeddings words(std::move(vocab), numeric::normal_matrix(2000, dim, 1.0, rng));
  std::uniform_int_distribution<int> pick(0, 1999);
  std::vector<std::string> claim, article(static_cast<std::size_t>(state.range(0)));
  for (int i = 0; i < 10; ++i) claim.push_back("w" + std::to_string(pick(rng)));
  for (auto& t : article) t = "w" + std::to_string(pick(rng));
  for (auto _ : state) benchmark::DoNotOptimize(corpus::extract_snippet(claim, article, words, 0.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExtractSnippet)->Arg(500)->Arg(5000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
