#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "declare/checkpoint.hpp"
#include "declare/cli/cli.hpp"
#include "declare/cli/settings.hpp"
#include "declare/errors.hpp"
#include "synthetic.hpp"

namespace {

namespace cli = declare::cli;
namespace model = declare::model;
using declare::numeric::Matrix;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "declare");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, GradcheckPasses) {
  const auto r = run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("max_relative_error="), std::string::npos);
}

TEST(Cli, GradcheckEveryHead) {
  for (const char* head : {"binary", "categorical", "regression"}) {
    EXPECT_EQ(run({"gradcheck", "--head", head, "--probes", "3"}).code, 0) << head;
  }
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("usage error"), std::string::npos) << r.err;
}

TEST(Cli, UnknownSettingIsUsageError) {
  EXPECT_EQ(run({"gradcheck", "--set", "colour=blue"}).code, 2);
  EXPECT_EQ(run({"gradcheck", "--set", "novalue"}).code, 2);
}

TEST(Cli, MissingInputNamesPath) {
  const auto dir = declare::testing::scratch_dir("cli-missing");
  const auto r = run({"predict", "--model", (dir / "absent.ckpt").string(), "--corpus", "x.jsonl",
                      "--embeddings", "y.txt"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.ckpt"), std::string::npos) << r.err;
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

// A hand-built model whose two articles score exactly 0.2 and 0.8: the
// network passes the article-source value straight to the output logit.
struct Fixture {
  std::filesystem::path dir;
  std::filesystem::path model, corpus, words;
};

Fixture two_article_fixture() {
  Fixture f;
  f.dir = declare::testing::scratch_dir("cli-predict");
  f.model = f.dir / "m.ckpt";
  f.corpus = f.dir / "corpus.jsonl";
  f.words = f.dir / "words.txt";
  declare::testing::write_text(f.words, "alpha 0.5 0.1\nbeta -0.2 0.3\n");
  declare::testing::write_text(
      f.corpus,
      R"({"id":"c1","claim":"alpha beta","claim_source":null,"label":null,"articles":[{"text":"alpha alpha","source":"low"},{"text":"beta","source":"high"}]})"
      "\n");
  const auto words = declare::embeddings::load_word_vectors(f.words);

  model::Model m;
  auto& h = m.hyper;
  h.word_dim = 2;
  h.claim_source_dim = 0;
  h.article_source_dim = 1;
  h.lstm_hidden = 1;
  h.dense_size = 1;
  h.dropout = 0.0;
  m.article_sources.index = {{"high", 2}, {"low", 1}};
  m.article_sources.rows = 3;
  m.vocabulary_fingerprint = words.fingerprint();
  m.params = model::init_params(h, 1, {}, Matrix<double>::from_rows({{0.0}, {1.0}, {2.0}}));
  for (auto* g : m.params.groups()) {
    if (g != &m.params.article_sources) g->fill(0.0);
  }
  const double ln4 = std::log(4.0);
  m.params.fusion_w(0, 2) = 1.0;  // [g (2) ⊕ article source (1)]
  m.params.dense_w(0, 0) = 1.0;
  m.params.output_w(0, 0) = 2.0 * ln4;
  m.params.output_b(0, 0) = -3.0 * ln4;
  model::save_checkpoint(f.model, m);
  return f;
}

std::string file_bytes(const std::filesystem::path& p) { return declare::testing::read_text(p); }

TEST(Cli, PredictAveragesArticleScores) {
  const auto f = two_article_fixture();
  const auto before = file_bytes(f.model);
  const auto r = run({"predict", "--model", f.model.string(), "--corpus", f.corpus.string(),
                      "--embeddings", f.words.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header, "id\tverdict\tcredibility");
  ASSERT_EQ(row.rfind("c1\ttrue\t", 0), 0u) << row;
  EXPECT_NEAR(std::stod(row.substr(row.rfind('\t') + 1)), 0.5, 1e-12);
  EXPECT_EQ(file_bytes(f.model), before);  // inference never rewrites the model
}

TEST(Cli, ExplainWritesAnnotations) {
  const auto f = two_article_fixture();
  const auto out = f.dir / "explain";
  const auto r = run({"explain", "--model", f.model.string(), "--corpus", f.corpus.string(),
                      "--embeddings", f.words.string(), "--out", out.string(), "--format",
                      "structured"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(out / "c1.json"));
  const auto text = file_bytes(out / "c1.json");
  EXPECT_NE(text.find("\"alpha\""), std::string::npos) << text;
}

TEST(Cli, ExplainRejectsUnknownFormat) {
  const auto f = two_article_fixture();
  const auto r = run({"explain", "--model", f.model.string(), "--corpus", f.corpus.string(),
                      "--embeddings", f.words.string(), "--format", "pdf"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, PredictRejectsForeignWordVectors) {
  const auto f = two_article_fixture();
  const auto other = f.dir / "other.txt";
  declare::testing::write_text(other, "alpha 0.5 0.1\ngamma -0.2 0.3\n");
  const auto r = run({"predict", "--model", f.model.string(), "--corpus", f.corpus.string(),
                      "--embeddings", other.string()});
  EXPECT_EQ(r.code, 1);
}

// End to end on the synthetic corpus: ingest, train, predict, eval.
TEST(Cli, PipelineRoundTrip) {
  const auto data = declare::testing::make_synthetic({.claims = 24});
  const auto dir = declare::testing::scratch_dir("cli-pipeline");
  declare::testing::write_text(dir / "words.txt", declare::testing::word_vectors_text(data.words));
  std::ostringstream raw;
  declare::corpus::write_corpus(raw, data.instances, declare::corpus::LabelScheme::binary());
  declare::testing::write_text(dir / "raw.jsonl", raw.str());
  declare::testing::write_text(dir / "cfg.txt",
                               "# small model\narticle_source_dim = 2\nlstm_hidden = 4\n"
                               "dense_size = 4\ndropout = 0\nmax_epochs = 2\narticle_min_support = 1\n");

  auto ingest = run({"ingest", "--input", (dir / "raw.jsonl").string(), "--embeddings",
                     (dir / "words.txt").string(), "--out", (dir / "corpus.jsonl").string(),
                     "--delta", "0"});
  ASSERT_EQ(ingest.code, 0) << ingest.err;
  const auto claims_at = ingest.out.find("claims=");
  ASSERT_EQ(claims_at, 0u) << ingest.out;
  const auto claims = ingest.out.substr(7, ingest.out.find('\n') - 7);
  EXPECT_GT(std::stoi(claims), 4) << ingest.out;

  const std::vector<std::string> common = {"--config", (dir / "cfg.txt").string()};
  auto args = std::vector<std::string>{"train", "--corpus", (dir / "corpus.jsonl").string(),
                                       "--embeddings", (dir / "words.txt").string(), "--out",
                                       (dir / "run").string(), "--folds", "2", "--final"};
  args.insert(args.end(), common.begin(), common.end());
  auto train = run(args);
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("fold=1 epoch=2"), std::string::npos) << train.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "fold-0.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "fold-1.metrics"));
  ASSERT_TRUE(std::filesystem::exists(dir / "run" / "model.ckpt"));

  auto predict = run({"predict", "--model", (dir / "run" / "model.ckpt").string(), "--corpus",
                      (dir / "corpus.jsonl").string(), "--embeddings", (dir / "words.txt").string(),
                      "--out", (dir / "pred.tsv").string()});
  ASSERT_EQ(predict.code, 0) << predict.err;

  auto eval = run({"eval", "--predictions", (dir / "pred.tsv").string(), "--corpus",
                   (dir / "corpus.jsonl").string(), "--format", "kv"});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_NE(eval.out.find("count=" + claims + "\n"), std::string::npos) << eval.out;
  EXPECT_NE(eval.out.find("auc="), std::string::npos) << eval.out;
}

// Settings ---------------------------------------------------------------

TEST(Settings, ConfigNamingPresetUsesItsValues) {
  std::istringstream in("preset = semeval\n");
  const auto s = cli::resolve_settings(cli::parse_config(in));
  EXPECT_EQ(s.hyper.lstm_hidden, 16u);
  EXPECT_EQ(s.hyper.dense_size, 8u);
  EXPECT_EQ(s.hyper.claim_source_dim, 4u);
  EXPECT_EQ(s.hyper.dropout, 0.3);
  EXPECT_EQ(s.hyper.head, model::Head::categorical);
  EXPECT_EQ(s.hyper.classes, 3u);
  EXPECT_EQ(s.dataset.article_min_support, 5u);
  EXPECT_TRUE(s.word_dim_explicit);
}

TEST(Settings, LaterLayersOverridePreset) {
  std::istringstream in("preset = snopes\ndropout = 0.1\n");
  auto values = cli::parse_config(in);
  EXPECT_EQ(cli::resolve_settings(values).hyper.dropout, 0.1);
  EXPECT_EQ(cli::resolve_settings(values).hyper.lstm_hidden, 64u);
  EXPECT_EQ(cli::resolve_settings(values).hyper.article_source_dim, 8u);
}

TEST(Settings, DefaultsMatchTrainingConfiguration) {
  const auto s = cli::resolve_settings({});
  EXPECT_EQ(s.train, declare::training::TrainConfig{});
  EXPECT_FALSE(s.word_dim_explicit);
  EXPECT_EQ(s.folds, 10u);
  EXPECT_EQ(s.delta, 0.5);
}

TEST(Settings, ParseErrorsCarryLineNumbers) {
  std::istringstream in("# ok\nlstm_hidden = 3\nthis line has no equals\n");
  try {
    cli::parse_config(in);
    FAIL();
  } catch (const declare::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Settings, BadValuesAreUsageErrors) {
  EXPECT_THROW(cli::resolve_settings({{"lstm_hidden", "many"}}), declare::UsageError);
  EXPECT_THROW(cli::resolve_settings({{"precision", "16"}}), declare::UsageError);
  EXPECT_THROW(cli::resolve_settings({{"folds", "1"}}), declare::UsageError);
  EXPECT_THROW(cli::resolve_settings({{"preset", "imdb"}}), declare::UsageError);
  EXPECT_THROW(cli::resolve_settings({{"colour", "blue"}}), declare::UsageError);
}

TEST(Settings, CategoricalLabelsParse) {
  const auto s = cli::resolve_settings({{"labels", "categorical:a,b,c,d"}});
  EXPECT_EQ(s.hyper.classes, 4u);
  EXPECT_EQ(s.dataset.labels.class_names, (std::vector<std::string>{"a", "b", "c", "d"}));
}

}  // namespace
