#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "declare/embeddings.hpp"
#include "declare/numeric/random.hpp"
#include "synthetic.hpp"

namespace {

namespace emb = declare::embeddings;

emb::WordEmbeddings parse(const std::string& text) {
  std::istringstream in(text);
  return emb::parse_word_vectors(in, std::nullopt);
}

TEST(Tokenize, LowercasesAndStripsEdgePunctuation) {
  const auto t = emb::tokenize("  Obama's \"new\" plan, (finally)!  U.S.  ");
  const std::vector<std::string> want = {"obama's", "new", "plan", "finally", "u.s"};
  EXPECT_EQ(t, want);
}

TEST(Tokenize, PunctuationOnlyTokensVanish) {
  EXPECT_TRUE(emb::tokenize(" -- ... !! ").empty());
}

TEST(WordVectors, ThreeLinesOfDimensionFour) {
  const auto words = parse("the 0.1 0.2 0.3 0.4\ncat 1 2 3 4\nsat -1 -2 -3 -4.5e-1\n");
  EXPECT_EQ(words.vocabulary().size(), 3u);
  EXPECT_EQ(words.dim(), 4u);
  EXPECT_EQ(words.vectors().rows(), 3u);
  EXPECT_EQ(words.lookup("sat")[3], -0.45);
  EXPECT_EQ(words.lookup("the")[0], 0.1);  // exact decimal-to-double read
}

TEST(WordVectors, AbsentTokenIsZeroVector) {
  const auto words = parse("a 1 2\n");
  const auto v = words.lookup("zzz");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
  EXPECT_FALSE(words.contains("zzz"));
}

TEST(WordVectors, RaggedLineReportsLineNumber) {
  try {
    parse("a 1 2 3\nb 1 2 3\n\nc 1 2\n");
    FAIL() << "expected ParseError";
  } catch (const declare::ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(WordVectors, EmptyInputIsDegenerate) {
  EXPECT_THROW(parse(""), declare::DegenerateInputError);
  EXPECT_THROW(parse("\n\n"), declare::DegenerateInputError);
}

TEST(WordVectors, VocabularyLimitStopsEarly) {
  std::istringstream in("a 1\nb 2\nc 3\n");
  EXPECT_EQ(emb::parse_word_vectors(in, 2).vocabulary().size(), 2u);
}

TEST(WordVectors, MissingFileIsIoError) {
  EXPECT_THROW(emb::load_word_vectors("/nonexistent/vectors.txt", std::nullopt), declare::IoError);
}

TEST(WordVectors, FingerprintTracksVocabulary) {
  const auto a = parse("x 1 2\ny 3 4\n");
  const auto b = parse("x 5 6\ny 7 8\n");
  const auto c = parse("y 1 2\nx 3 4\n");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(WordVectors, PublishedGloveFirstThousandLines) {
  const char* path = std::getenv("DECLARE_GLOVE_6B_100D");
  if (path == nullptr) GTEST_SKIP() << "DECLARE_GLOVE_6B_100D not set";
  const auto words = emb::load_word_vectors(path, 1000);
  EXPECT_EQ(words.vocabulary().size(), 1000u);
  EXPECT_EQ(words.dim(), 100u);
}

TEST(SourceTable, BelowSupportSharesDummyRow) {
  const auto table = emb::build_source_table({{"a", 7}, {"b", 2}}, 5, 3, 1);
  EXPECT_NE(table.vocabulary.resolve("a"), table.vocabulary.dummy_row);
  EXPECT_EQ(table.vocabulary.resolve("b"), table.vocabulary.dummy_row);
  EXPECT_EQ(table.vocabulary.resolve("never-seen"), table.vocabulary.dummy_row);
  EXPECT_EQ(table.vectors.rows(), 2u);
  EXPECT_EQ(table.vectors.cols(), 3u);
}

TEST(SourceTable, MinSupportOneHasNoDummyAssignments) {
  const auto table = emb::build_source_table({{"a", 1}, {"b", 1}, {"c", 3}}, 1, 2, 1);
  std::set<std::size_t> rows;
  for (const char* s : {"a", "b", "c"}) {
    const auto r = table.vocabulary.resolve(s);
    EXPECT_NE(r, table.vocabulary.dummy_row);
    rows.insert(r);
  }
  EXPECT_EQ(rows.size(), 3u);
}

TEST(SourceTable, RareSourcesResolveToSameRow) {
  const auto table = emb::build_source_table({{"a", 1}, {"b", 2}, {"c", 3}, {"d", 9}}, 5, 2, 1);
  EXPECT_EQ(table.vocabulary.resolve("a"), table.vocabulary.resolve("b"));
  EXPECT_EQ(table.vocabulary.resolve("b"), table.vocabulary.resolve("c"));
  EXPECT_NE(table.vocabulary.resolve("c"), table.vocabulary.resolve("d"));
}

TEST(SourceTable, SeededAndBounded) {
  const auto a = emb::build_source_table({{"a", 9}, {"b", 9}}, 1, 4, 77);
  const auto b = emb::build_source_table({{"a", 9}, {"b", 9}}, 1, 4, 77);
  EXPECT_EQ(a.vectors, b.vectors);
  for (double x : a.vectors.data()) EXPECT_LE(std::abs(x), emb::kSourceInitRange);
  EXPECT_THROW(emb::build_source_table({}, 1, 0, 1), declare::ContractError);
}

TEST(SourceTable, RowNamesIncludeDummy) {
  const auto table = emb::build_source_table({{"b", 9}, {"a", 9}}, 1, 2, 1);
  const auto names = table.vocabulary.row_names();
  ASSERT_EQ(names.size(), 3u);
  EXPECT_EQ(names[table.vocabulary.dummy_row], emb::kDummySourceName);
}

TEST(ClaimMean, SingleTokenIsItsVector) {
  const auto words = parse("a 1 -2 3\nb 4 5 6\n");
  const std::vector<std::string> claim = {"a"};
  EXPECT_EQ(emb::claim_mean(claim, words), (std::vector<double>{1, -2, 3}));
}

TEST(ClaimMean, OppositeVectorsCancel) {
  const auto words = parse("v 1.5 -2\nw -1.5 2\n");
  const std::vector<std::string> claim = {"v", "w"};
  EXPECT_EQ(emb::claim_mean(claim, words), (std::vector<double>{0, 0}));
}

TEST(ClaimMean, OutOfVocabularyCountsInDenominator) {
  const auto words = parse("a 2 4\n");
  const std::vector<std::string> claim = {"a", "unknown"};
  EXPECT_EQ(emb::claim_mean(claim, words), (std::vector<double>{1, 2}));
}

TEST(ClaimMean, FiveTokensMatchDirectSum) {
  const auto data = declare::testing::make_synthetic();
  const auto& claim = data.instances.front().claim;
  ASSERT_EQ(claim.size(), 5u);
  const auto mean = emb::claim_mean(claim, data.words);
  for (std::size_t d = 0; d < data.words.dim(); ++d) {
    double s = 0;
    for (const auto& t : claim) s += data.words.lookup(t)[d];
    EXPECT_NEAR(mean[d], s / 5.0, 1e-12);
  }
}

TEST(ClaimMean, PermutationInvariant) {
  const auto words = parse("a 0.1 0.7\nb 0.2 -0.3\nc 1e-3 5\n");
  std::vector<std::string> claim = {"a", "b", "c", "a"};
  const auto m1 = emb::claim_mean(claim, words);
  std::reverse(claim.begin(), claim.end());
  const auto m2 = emb::claim_mean(claim, words);
  for (std::size_t i = 0; i < m1.size(); ++i) EXPECT_NEAR(m1[i], m2[i], 1e-15);
}

TEST(ClaimMean, EmptyClaimIsDegenerate) {
  const auto words = parse("a 1\n");
  EXPECT_THROW(emb::claim_mean({}, words), declare::DegenerateInputError);
}

}  // namespace
