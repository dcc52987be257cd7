#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "declare/model.hpp"

namespace declare::explain {

inline constexpr std::size_t kShadeLevels = 5;

struct AttentionAnnotation {
  std::string claim_id;
  std::string claim;
  std::string source;   // article source
  std::string verdict;
  std::vector<std::string> tokens;
  std::vector<double> weights;
  std::vector<std::size_t> shades;  // 0 (lightest) .. kShadeLevels - 1

  friend bool operator==(const AttentionAnnotation&, const AttentionAnnotation&) = default;
};

// Mid-rank of each weight among the others, cut into kShadeLevels equal
// ranges: equal weights share a level, a unique maximum gets the top level.
std::vector<std::size_t> shade_buckets(std::span<const double> weights);

template <typename T>
AttentionAnnotation annotate(const model::ForwardTrace<T>& trace,
                             std::span<const std::string> tokens, std::string verdict);

enum class Format { ansi, html, structured };

Format parse_format(std::string_view name);  // throws UsageError

std::string render(const AttentionAnnotation& annotation, Format format);

// Full HTML page with one block per article.
std::string render_html_page(std::span<const AttentionAnnotation> annotations);

AttentionAnnotation parse_structured(std::string_view text);

struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  std::string name;
  friend bool operator==(const ProjectedPoint&, const ProjectedPoint&) = default;
};

struct Projection2D {
  std::vector<ProjectedPoint> points;
  std::array<double, 2> explained_variance{};  // fraction of total variance
  std::array<std::vector<double>, 2> components;
};

struct PcaOptions {
  std::size_t max_iterations = 100000;
  double tolerance = 1e-13;
};

// Mean-centres, then extracts the top two covariance eigenvectors by power
// iteration with deflation. Each component's largest-magnitude entry is
// positive.
Projection2D pca_project(std::span<const std::vector<double>> vectors,
                         std::span<const std::string> names, std::span<const std::string> labels,
                         const PcaOptions& options = {});

// `name,label,x,y` rows with a header line.
void write_projection_csv(std::ostream& out, const Projection2D& projection);

}  // namespace declare::explain
