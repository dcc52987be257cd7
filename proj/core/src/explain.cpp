#include "declare/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "declare/errors.hpp"
#include "json.hpp"

namespace declare::explain {

namespace {

using nlohmann::json;

// Darkening grey backgrounds from the 256-colour palette.
constexpr int kAnsiBackground[kShadeLevels] = {255, 252, 249, 246, 243};
constexpr double kHtmlAlpha[kShadeLevels] = {0.0, 0.2, 0.4, 0.65, 0.9};

std::string escape_html(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_ansi(const AttentionAnnotation& a) {
  std::ostringstream os;
  os << "[" << a.verdict << "] " << a.claim << "\n";
  if (!a.source.empty()) os << "source: " << a.source << "\n";
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (i > 0) os << ' ';
    os << "\x1b[30;48;5;" << kAnsiBackground[a.shades[i]] << 'm' << a.tokens[i] << "\x1b[0m";
  }
  os << '\n';
  return os.str();
}

std::string render_html_block(const AttentionAnnotation& a) {
  std::ostringstream os;
  os << "<div class=\"annotation\">\n";
  os << "<p class=\"claim\"><strong>" << escape_html(a.verdict) << "</strong> "
     << escape_html(a.claim) << "</p>\n";
  if (!a.source.empty()) os << "<p class=\"source\">" << escape_html(a.source) << "</p>\n";
  os << "<p class=\"snippet\">";
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (i > 0) os << ' ';
    os << "<span class=\"shade-" << a.shades[i] << "\" title=\"" << a.weights[i]
       << "\" style=\"background-color: rgba(230, 120, 0, " << kHtmlAlpha[a.shades[i]] << ")\">"
       << escape_html(a.tokens[i]) << "</span>";
  }
  os << "</p>\n</div>\n";
  return os.str();
}

json to_json(const AttentionAnnotation& a) {
  return json{{"claim_id", a.claim_id}, {"claim", a.claim},     {"source", a.source},
              {"verdict", a.verdict},   {"tokens", a.tokens},   {"weights", a.weights},
              {"shades", a.shades}};
}

void check(const AttentionAnnotation& a) {
  if (a.tokens.size() != a.weights.size() || a.tokens.size() != a.shades.size()) {
    throw ContractError("annotation: tokens, weights and shades differ in length");
  }
  for (auto s : a.shades) {
    if (s >= kShadeLevels) throw ContractError("annotation: shade level out of range");
  }
}

void normalize_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (auto& x : v) x = -x;
  }
}

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<double> multiply(const std::vector<std::vector<double>>& m, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = std::inner_product(m[i].begin(), m[i].end(), v.begin(), 0.0);
  }
  return out;
}

// Dominant eigenpair of a symmetric PSD matrix, or nullopt when the matrix is
// numerically zero.
std::optional<std::pair<double, std::vector<double>>> dominant(
    const std::vector<std::vector<double>>& m, double scale, const PcaOptions& options) {
  const std::size_t n = m.size();
  // Start from the column with the largest norm: it cannot be orthogonal to
  // every dominant direction.
  std::size_t start = 0;
  double start_norm = -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m[i][j] * m[i][j];
    if (s > start_norm) {
      start_norm = s;
      start = j;
    }
  }
  if (std::sqrt(start_norm) <= 1e-14 * scale) return std::nullopt;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = m[i][start];
  double len = norm(v);
  for (auto& x : v) x /= len;

  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    auto next = multiply(m, v);
    len = norm(next);
    if (len <= 1e-300) return std::nullopt;
    for (auto& x : next) x /= len;
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(next[i] - v[i]));
    v = std::move(next);
    if (diff < options.tolerance) break;
  }
  const auto mv = multiply(m, v);
  const double lambda = std::inner_product(v.begin(), v.end(), mv.begin(), 0.0);
  normalize_sign(v);
  return std::pair{lambda, std::move(v)};
}

}  // namespace

std::vector<std::size_t> shade_buckets(std::span<const double> weights) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> shades(n, kShadeLevels - 1);
  if (n <= 1) return shades;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t below = 0;
    std::size_t equal = 0;
    for (double w : weights) {
      if (w < weights[i]) ++below;
      else if (w == weights[i]) ++equal;
    }
    // Mid-rank among the other n - 1 weights, in [0, 1].
    const double q = (static_cast<double>(below) + 0.5 * static_cast<double>(equal - 1)) /
                     static_cast<double>(n - 1);
    shades[i] = std::min(kShadeLevels - 1,
                         static_cast<std::size_t>(std::floor(q * static_cast<double>(kShadeLevels))));
  }
  return shades;
}

template <typename T>
AttentionAnnotation annotate(const model::ForwardTrace<T>& trace,
                             std::span<const std::string> tokens, std::string verdict) {
  if (tokens.size() != trace.attention_weights.size()) {
    throw ContractError("annotate: " + std::to_string(tokens.size()) + " tokens for " +
                        std::to_string(trace.attention_weights.size()) + " attention weights");
  }
  AttentionAnnotation a;
  a.verdict = std::move(verdict);
  a.tokens.assign(tokens.begin(), tokens.end());
  a.weights.assign(trace.attention_weights.begin(), trace.attention_weights.end());
  a.shades = shade_buckets(a.weights);
  return a;
}

Format parse_format(std::string_view name) {
  if (name == "ansi") return Format::ansi;
  if (name == "html") return Format::html;
  if (name == "structured") return Format::structured;
  throw UsageError("unknown format '" + std::string(name) + "' (expected ansi, html or structured)");
}

std::string render(const AttentionAnnotation& annotation, Format format) {
  check(annotation);
  switch (format) {
    case Format::ansi: return render_ansi(annotation);
    case Format::html: return render_html_block(annotation);
    case Format::structured: return to_json(annotation).dump();
  }
  throw UsageError("unknown format");
}

std::string render_html_page(std::span<const AttentionAnnotation> annotations) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
  os << (annotations.empty() ? std::string("claim") : escape_html(annotations.front().claim_id));
  os << "</title>\n<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
        ".annotation{margin-bottom:1.5em}.source{color:#555}</style>\n</head>\n<body>\n";
  for (const auto& a : annotations) {
    check(a);
    os << render_html_block(a);
  }
  os << "</body>\n</html>\n";
  return os.str();
}

AttentionAnnotation parse_structured(std::string_view text) {
  try {
    const auto j = json::parse(text);
    AttentionAnnotation a;
    j.at("claim_id").get_to(a.claim_id);
    j.at("claim").get_to(a.claim);
    j.at("source").get_to(a.source);
    j.at("verdict").get_to(a.verdict);
    j.at("tokens").get_to(a.tokens);
    j.at("weights").get_to(a.weights);
    j.at("shades").get_to(a.shades);
    check(a);
    return a;
  } catch (const json::exception& e) {
    throw ParseError(std::string("structured annotation: ") + e.what());
  }
}

Projection2D pca_project(std::span<const std::vector<double>> vectors,
                         std::span<const std::string> names, std::span<const std::string> labels,
                         const PcaOptions& options) {
  const std::size_t n = vectors.size();
  if (n < 3) throw ContractError("pca_project: need at least 3 vectors");
  if (names.size() != n || labels.size() != n) {
    throw ContractError("pca_project: names and labels must match the vectors");
  }
  const std::size_t dim = vectors.front().size();
  if (dim < 2) throw ContractError("pca_project: vectors need at least 2 dimensions");

  std::vector<double> mean(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw ShapeError("pca_project: vectors differ in length");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
  std::vector<double> centred(dim);
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < dim; ++i) centred[i] = v[i] - mean[i];
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = i; j < dim; ++j) cov[i][j] += centred[i] * centred[j];
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      cov[i][j] /= static_cast<double>(n - 1);
      cov[j][i] = cov[i][j];
    }
    total += cov[i][i];
  }
  if (!(total > 0.0)) throw DegenerateInputError("pca_project: data has zero variance");

  Projection2D out;
  auto first = dominant(cov, total, options);
  if (!first) throw DegenerateInputError("pca_project: data has zero variance");
  auto& v1 = first->second;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) cov[i][j] -= first->first * v1[i] * v1[j];
  }
  auto second = dominant(cov, total, options);
  std::vector<double> v2;
  double lambda2 = 0.0;
  if (second) {
    lambda2 = std::max(0.0, second->first);
    v2 = std::move(second->second);
  } else {
    // Rank-1 data: any unit vector orthogonal to v1 carries zero variance.
    std::size_t axis = 0;
    for (std::size_t i = 1; i < dim; ++i) {
      if (std::abs(v1[i]) < std::abs(v1[axis])) axis = i;
    }
    v2.assign(dim, 0.0);
    v2[axis] = 1.0;
    for (std::size_t i = 0; i < dim; ++i) v2[i] -= v1[axis] * v1[i];
    const double len = norm(v2);
    for (auto& x : v2) x /= len;
    normalize_sign(v2);
  }
  out.explained_variance = {std::clamp(first->first / total, 0.0, 1.0),
                            std::clamp(lambda2 / total, 0.0, 1.0)};
  out.components = {v1, v2};

  out.points.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    ProjectedPoint p;
    for (std::size_t i = 0; i < dim; ++i) {
      const double c = vectors[r][i] - mean[i];
      p.x += c * v1[i];
      p.y += c * v2[i];
    }
    p.name = names[r];
    p.label = labels[r];
    out.points.push_back(std::move(p));
  }
  return out;
}

void write_projection_csv(std::ostream& out, const Projection2D& projection) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  };
  out << "name,label,x,y\n";
  out.precision(17);
  for (const auto& p : projection.points) {
    out << quote(p.name) << ',' << quote(p.label) << ',' << p.x << ',' << p.y << '\n';
  }
}

template AttentionAnnotation annotate(const model::ForwardTrace<float>&,
                                      std::span<const std::string>, std::string);
template AttentionAnnotation annotate(const model::ForwardTrace<double>&,
                                      std::span<const std::string>, std::string);

}  // namespace declare::explain
