#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>
#include <sstream>

#include "declare/errors.hpp"
#include "declare/explain.hpp"

namespace {

namespace explain = declare::explain;

TEST(Shades, StrictlyIncreasingWeightsSpanAllLevels) {
  const std::vector<double> w = {0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_EQ(explain::shade_buckets(w), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Shades, UniformWeightsShareMiddleLevel) {
  const std::vector<double> w(7, 1.0 / 7);
  EXPECT_EQ(explain::shade_buckets(w), std::vector<std::size_t>(7, 2));
}

TEST(Shades, UniqueMaximumIsDarkest) {
  const std::vector<double> w = {0.05, 0.05, 0.8, 0.05, 0.05};
  const auto s = explain::shade_buckets(w);
  EXPECT_EQ(s[2], explain::kShadeLevels - 1);
  for (std::size_t i : {0u, 1u, 3u, 4u}) EXPECT_LT(s[i], s[2]);
}

TEST(Shades, SingleTokenIsDarkest) {
  const std::vector<double> w = {1.0};
  EXPECT_EQ(explain::shade_buckets(w), (std::vector<std::size_t>{4}));
}

TEST(Shades, MonotoneInWeight) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(1 + rng() % 30);
    for (auto& x : w) x = std::round(u(rng) * 8) / 8;
    const auto s = explain::shade_buckets(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[i] < w[j]) EXPECT_LE(s[i], s[j]);
        if (w[i] == w[j]) EXPECT_EQ(s[i], s[j]);
      }
    }
  }
}

explain::AttentionAnnotation sample() {
  explain::AttentionAnnotation a;
  a.claim_id = "c1";
  a.claim = "a \"quoted\" claim & more";
  a.source = "example.org";
  a.verdict = "false";
  a.tokens = {"<b>", "bold", "it's"};
  a.weights = {0.2, 0.5, 0.3};
  a.shades = explain::shade_buckets(a.weights);
  return a;
}

TEST(Render, HtmlEscapesMarkup) {
  const auto html = explain::render(sample(), explain::Format::html);
  EXPECT_EQ(html.find("<b>"), std::string::npos);
  EXPECT_NE(html.find("&lt;b&gt;"), std::string::npos);
  EXPECT_NE(html.find("&quot;quoted&quot;"), std::string::npos);
  EXPECT_NE(html.find("&amp; more"), std::string::npos);
  EXPECT_NE(html.find("it&#39;s"), std::string::npos);
  EXPECT_NE(html.find("shade-4"), std::string::npos);
}

TEST(Render, TokensKeepArticleOrder) {
  for (auto format : {explain::Format::ansi, explain::Format::html}) {
    const auto text = explain::render(sample(), format);
    const auto first = text.find(format == explain::Format::html ? "&lt;b&gt;" : "<b>");
    const auto second = text.find("bold");
    const auto third = text.find(format == explain::Format::html ? "it&#39;s" : "it's");
    ASSERT_NE(third, std::string::npos);
    EXPECT_LT(first, second);
    EXPECT_LT(second, third);
  }
}

TEST(Render, AnsiUsesBackgroundColours) {
  const auto text = explain::render(sample(), explain::Format::ansi);
  EXPECT_NE(text.find("\x1b[30;48;5;"), std::string::npos);
  EXPECT_NE(text.find("[false]"), std::string::npos);
}

TEST(Render, StructuredRoundTrips) {
  const auto a = sample();
  EXPECT_EQ(explain::parse_structured(explain::render(a, explain::Format::structured)), a);
  EXPECT_THROW(explain::parse_structured("{not json"), declare::ParseError);
}

TEST(Render, HtmlPageHoldsEveryArticle) {
  const std::vector<explain::AttentionAnnotation> all = {sample(), sample()};
  const auto page = explain::render_html_page(all);
  EXPECT_EQ(page.rfind("<!DOCTYPE html>", 0), 0u);
  std::size_t count = 0;
  for (auto p = page.find("class=\"annotation\""); p != std::string::npos;
       p = page.find("class=\"annotation\"", p + 1)) {
    ++count;
  }
  EXPECT_EQ(count, 2u);
}

TEST(Render, ParseFormat) {
  EXPECT_EQ(explain::parse_format("html"), explain::Format::html);
  EXPECT_EQ(explain::parse_format("ansi"), explain::Format::ansi);
  EXPECT_EQ(explain::parse_format("structured"), explain::Format::structured);
  EXPECT_THROW(explain::parse_format("pdf"), declare::UsageError);
}

TEST(Annotate, UsesTraceWeights) {
  declare::model::ForwardTrace<double> trace;
  trace.attention_weights = {0.25, 0.75};
  const std::vector<std::string> tokens = {"x", "y"};
  const auto a = explain::annotate(trace, tokens, "true");
  EXPECT_EQ(a.weights, trace.attention_weights);
  EXPECT_EQ(a.shades, (std::vector<std::size_t>{0, 4}));
  const std::vector<std::string> one = {"x"};
  EXPECT_THROW(explain::annotate(trace, one, "true"), declare::ContractError);
}

// PCA --------------------------------------------------------------------

struct Cloud {
  std::vector<std::vector<double>> vectors;
  std::vector<std::string> names, labels;
};

Cloud random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  Cloud c;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = g(rng) * (1.0 + 2.0 * static_cast<double>(dim - j));
    c.vectors.push_back(v);
    c.names.push_back("p" + std::to_string(i));
    c.labels.push_back(i % 2 ? "true" : "false");
  }
  return c;
}

Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  return v(k) < 0 ? Eigen::VectorXd(-v) : v;
}

TEST(Pca, MatchesSelfAdjointEigenSolver) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto c = random_cloud(40, 6, seed);
    const auto proj = explain::pca_project(c.vectors, c.names, c.labels);

    Eigen::MatrixXd x(40, 6);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 6; ++j) x(i, j) = c.vectors[i][j];
    }
    const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / 39.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const double total = cov.trace();
    for (int k = 0; k < 2; ++k) {
      const auto want = canonical_sign(solver.eigenvectors().col(5 - k));
      for (int j = 0; j < 6; ++j) EXPECT_NEAR(proj.components[k][j], want(j), 1e-6) << "seed " << seed;
      EXPECT_NEAR(proj.explained_variance[k], solver.eigenvalues()(5 - k) / total, 1e-9);
    }
  }
}

TEST(Pca, RankTwoDataIsFullyExplained) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 1);
  Cloud c;
  const std::vector<double> u = {1, 2, 0, -1}, w = {0, 1, 1, 1};
  for (int i = 0; i < 20; ++i) {
    const double a = g(rng) * 3, b = g(rng);
    std::vector<double> v(4);
    for (int j = 0; j < 4; ++j) v[j] = a * u[j] + b * w[j] + 5.0;
    c.vectors.push_back(v);
    c.names.push_back("n");
    c.labels.push_back("l");
  }
  const auto proj = explain::pca_project(c.vectors, c.names, c.labels);
  EXPECT_NEAR(proj.explained_variance[0] + proj.explained_variance[1], 1.0, 1e-9);
}

TEST(Pca, DominantAxisIsFirstComponent) {
  Cloud c;
  for (int i = 0; i < 10; ++i) {
    c.vectors.push_back({static_cast<double>(i) * 10.0, (i % 3) * 0.1, 0.0});
    c.names.push_back("n");
    c.labels.push_back("l");
  }
  const auto proj = explain::pca_project(c.vectors, c.names, c.labels);
  EXPECT_NEAR(std::abs(proj.components[0][0]), 1.0, 1e-6);
  EXPECT_GT(proj.explained_variance[0], 0.99);
}

TEST(Pca, RowPermutationPermutesPoints) {
  auto c = random_cloud(15, 4, 9);
  const auto a = explain::pca_project(c.vectors, c.names, c.labels);
  std::reverse(c.vectors.begin(), c.vectors.end());
  std::reverse(c.names.begin(), c.names.end());
  std::reverse(c.labels.begin(), c.labels.end());
  const auto b = explain::pca_project(c.vectors, c.names, c.labels);
  for (std::size_t i = 0; i < 15; ++i) {
    EXPECT_EQ(a.points[i].name, b.points[14 - i].name);
    EXPECT_NEAR(a.points[i].x, b.points[14 - i].x, 1e-9);
    EXPECT_NEAR(a.points[i].y, b.points[14 - i].y, 1e-9);
  }
}

TEST(Pca, RankOneStillGivesOrthogonalSecondAxis) {
  Cloud c;
  for (int i = 0; i < 5; ++i) {
    c.vectors.push_back({double(i), 2.0 * i, -double(i)});
    c.names.push_back("n");
    c.labels.push_back("l");
  }
  const auto proj = explain::pca_project(c.vectors, c.names, c.labels);
  double dot = 0, len = 0;
  for (int j = 0; j < 3; ++j) {
    dot += proj.components[0][j] * proj.components[1][j];
    len += proj.components[1][j] * proj.components[1][j];
  }
  EXPECT_NEAR(dot, 0.0, 1e-12);
  EXPECT_NEAR(len, 1.0, 1e-12);
  EXPECT_NEAR(proj.explained_variance[0], 1.0, 1e-12);
  for (const auto& p : proj.points) EXPECT_NEAR(p.y, 0.0, 1e-9);
}

TEST(Pca, DegenerateInputs) {
  Cloud same;
  for (int i = 0; i < 4; ++i) {
    same.vectors.push_back({1.0, 2.0});
    same.names.push_back("n");
    same.labels.push_back("l");
  }
  EXPECT_THROW(explain::pca_project(same.vectors, same.names, same.labels), declare::DegenerateInputError);
  auto two = random_cloud(2, 3, 1);
  EXPECT_THROW(explain::pca_project(two.vectors, two.names, two.labels), declare::ContractError);
}

TEST(Pca, CsvHasHeaderAndOneRowPerPoint) {
  const auto c = random_cloud(5, 3, 2);
  std::ostringstream out;
  explain::write_projection_csv(out, explain::pca_project(c.vectors, c.names, c.labels));
  const auto text = out.str();
  EXPECT_EQ(text.rfind("name,label,x,y\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

}  // namespace
