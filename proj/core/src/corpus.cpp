#include "declare/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "declare/errors.hpp"
#include "declare/numeric/random.hpp"
#include "json.hpp"

namespace declare::corpus {

using nlohmann::json;

namespace {

std::string normalize_rating(std::string_view rating) {
  std::string out;
  bool pending_space = false;
  for (char ch : rating) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == '-' || ch == '_') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

double parse_label(const json& value, const LabelScheme& scheme, const std::string& where) {
  switch (scheme.kind) {
    case LabelKind::binary:
      if (value.is_boolean()) return value.get<bool>() ? 1.0 : 0.0;
      if (value.is_number_integer()) {
        const auto v = value.get<long long>();
        if (v == 0 || v == 1) return static_cast<double>(v);
      }
      if (value.is_string()) {
        try {
          return map_politifact_label(value.get<std::string>()) ? 1.0 : 0.0;
        } catch (const ParseError& e) {
          throw ParseError(where + ": " + e.what());
        }
      }
      throw ParseError(where + ": binary label must be a boolean, 0/1 or a rating string");
    case LabelKind::categorical: {
      if (value.is_number_integer()) {
        const auto v = value.get<long long>();
        if (v >= 0 && static_cast<std::size_t>(v) < scheme.class_names.size()) {
          return static_cast<double>(v);
        }
      }
      if (value.is_string()) {
        const auto name = normalize_rating(value.get<std::string>());
        for (std::size_t i = 0; i < scheme.class_names.size(); ++i) {
          if (normalize_rating(scheme.class_names[i]) == name) return static_cast<double>(i);
        }
      }
      throw ParseError(where + ": label " + value.dump() + " is not one of the configured classes");
    }
    case LabelKind::regression:
      if (value.is_number()) {
        const double v = value.get<double>();
        if (std::isfinite(v)) return v;
      }
      throw ParseError(where + ": regression label must be a finite number");
  }
  throw ContractError("unknown label kind");
}

json label_to_json(double value, const LabelScheme& scheme) {
  switch (scheme.kind) {
    case LabelKind::binary:
      return value >= 0.5;
    case LabelKind::categorical:
      return scheme.class_names.at(static_cast<std::size_t>(value));
    case LabelKind::regression:
      return value;
  }
  return nullptr;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const long double> b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// Window scores closer than this are treated as ties.
constexpr double kTieTolerance = 1e-12;

}  // namespace

bool map_politifact_label(std::string_view rating) {
  const auto r = normalize_rating(rating);
  if (r == "true" || r == "mostly true" || r == "half true") return true;
  if (r == "mostly false" || r == "false" || r == "pants on fire" || r == "pants fire") {
    return false;
  }
  throw ParseError("unknown rating '" + std::string(rating) + "'");
}

IngestResult ingest(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError("record is not an object", line_no);

    if (!record.contains("id") || !(record["id"].is_string() || record["id"].is_number())) {
      throw ParseError("record missing field 'id'", line_no);
    }
    const std::string id =
        record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump();
    const std::string where = "record '" + id + "' (line " + std::to_string(line_no) + ")";
    auto require = [&](const char* field) -> const json& {
      if (!record.contains(field)) throw ParseError(where + ": missing field '" + field + "'");
      return record[field];
    };

    ClaimInstance inst;
    inst.id = id;
    const auto& claim = require("claim");
    if (!claim.is_string()) throw ParseError(where + ": field 'claim' must be a string");
    inst.claim = embeddings::tokenize(claim.get<std::string>());
    if (inst.claim.empty()) throw ParseError(where + ": claim has no tokens");

    if (record.contains("claim_source") && !record["claim_source"].is_null()) {
      if (!record["claim_source"].is_string()) {
        throw ParseError(where + ": field 'claim_source' must be a string or null");
      }
      inst.claim_source = record["claim_source"].get<std::string>();
    }

    if (record.contains("label") && !record["label"].is_null()) {
      inst.label = parse_label(record["label"], options.labels, where);
    } else if (options.require_labels) {
      throw ParseError(where + ": missing field 'label'");
    }

    const auto& articles = require("articles");
    if (!articles.is_array()) throw ParseError(where + ": field 'articles' must be an array");
    for (const auto& a : articles) {
      if (!a.is_object() || !a.contains("text") || !a["text"].is_string()) {
        throw ParseError(where + ": article missing field 'text'");
      }
      if (!a.contains("source") || !a["source"].is_string()) {
        throw ParseError(where + ": article missing field 'source'");
      }
      Article article;
      article.source = a["source"].get<std::string>();
      if (options.source_blocklist.contains(article.source)) {
        ++result.blocked_articles;
        continue;
      }
      article.tokens = embeddings::tokenize(a["text"].get<std::string>());
      if (article.tokens.empty()) {
        ++result.empty_articles;
        continue;
      }
      inst.articles.push_back(std::move(article));
    }

    if (!seen.insert(id).second) throw ParseError(where + ": duplicate id");
    if (inst.articles.empty()) {
      ++result.skipped_claims;
      continue;
    }
    result.instances.push_back(std::move(inst));
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path.string() + "'");
  try {
    return ingest(in, options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_corpus(std::ostream& out, std::span<const ClaimInstance> instances,
                  const LabelScheme& labels) {
  for (const auto& inst : instances) {
    json record;
    record["id"] = inst.id;
    record["claim"] = join(inst.claim);
    record["claim_source"] = inst.claim_source ? json(*inst.claim_source) : json(nullptr);
    record["label"] = inst.label ? label_to_json(*inst.label, labels) : json(nullptr);
    json articles = json::array();
    for (const auto& a : inst.articles) {
      articles.push_back({{"text", join(a.tokens)}, {"source", a.source}});
    }
    record["articles"] = std::move(articles);
    out << record.dump() << '\n';
  }
}

std::set<std::string, std::less<>> load_blocklist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open blocklist '" + path.string() + "'");
  std::set<std::string, std::less<>> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    names.insert(line.substr(b, e - b + 1));
  }
  return names;
}

SourceCounts count_sources(std::span<const ClaimInstance> instances) {
  SourceCounts counts;
  for (const auto& inst : instances) {
    if (inst.claim_source) ++counts.claim_sources[*inst.claim_source];
    for (const auto& a : inst.articles) ++counts.article_sources[a.source];
  }
  return counts;
}

SnippetScore score_window(std::span<const std::string> claim, std::span<const std::string> window,
                          const embeddings::WordEmbeddings& emb) {
  SnippetScore score;
  std::unordered_set<std::string_view> types(claim.begin(), claim.end());
  std::unordered_set<std::string_view> present(window.begin(), window.end());
  std::size_t hits = 0;
  for (auto t : types) hits += present.contains(t) ? 1 : 0;
  score.sim_bow = types.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(types.size());

  const auto mean = embeddings::claim_mean(claim, emb);
  std::vector<long double> total(emb.dim(), 0.0L);
  for (const auto& t : window) {
    auto v = emb.lookup(t);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += v[i];
  }
  score.sim_semantic = cosine(mean, total);
  score.sim = score.sim_bow * score.sim_semantic;
  return score;
}

std::optional<Snippet> extract_snippet(std::span<const std::string> claim,
                                       std::span<const std::string> article,
                                       const embeddings::WordEmbeddings& emb, double threshold,
                                       std::size_t length) {
  if (article.empty()) throw ContractError("extract_snippet: empty article");
  if (length == 0) throw ContractError("extract_snippet: window length must be >= 1");
  const auto mean = embeddings::claim_mean(claim, emb);

  // Claim word types, and each article token's type index (or -1).
  std::unordered_map<std::string_view, int> type_of;
  for (const auto& t : claim) type_of.try_emplace(t, static_cast<int>(type_of.size()));
  std::vector<int> token_type(article.size());
  std::vector<std::span<const double>> vectors(article.size());
  std::vector<std::uint8_t> known(article.size());
  for (std::size_t i = 0; i < article.size(); ++i) {
    auto it = type_of.find(article[i]);
    token_type[i] = it == type_of.end() ? -1 : it->second;
    vectors[i] = emb.lookup(article[i]);
    known[i] = emb.contains(article[i]) ? 1 : 0;
  }

  const std::size_t width = std::min(length, article.size());
  const double n_types = static_cast<double>(type_of.size());
  std::vector<std::size_t> counts(type_of.size(), 0);
  std::size_t present = 0;
  std::size_t in_vocab = 0;
  std::vector<long double> total(emb.dim(), 0.0L);

  auto enter = [&](std::size_t i) {
    if (token_type[i] >= 0 && counts[token_type[i]]++ == 0) ++present;
    in_vocab += known[i];
    for (std::size_t d = 0; d < total.size(); ++d) total[d] += vectors[i][d];
  };
  auto leave = [&](std::size_t i) {
    if (token_type[i] >= 0 && --counts[token_type[i]] == 0) --present;
    in_vocab -= known[i];
    for (std::size_t d = 0; d < total.size(); ++d) total[d] -= vectors[i][d];
  };

  for (std::size_t i = 0; i < width; ++i) enter(i);
  std::size_t best_start = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t start = 0;; ++start) {
    // An all-OOV window has a zero mean; skip the cosine of the rounding residue.
    const double semantic = in_vocab == 0 ? 0.0 : cosine(mean, total);
    const double sim = (static_cast<double>(present) / n_types) * semantic;
    if (sim > best + kTieTolerance) {
      best = sim;
      best_start = start;
    }
    if (start + width >= article.size()) break;
    leave(start);
    enter(start + width);
  }

  Snippet snippet;
  snippet.start = best_start;
  snippet.tokens.assign(article.begin() + static_cast<std::ptrdiff_t>(best_start),
                        article.begin() + static_cast<std::ptrdiff_t>(best_start + width));
  snippet.score = score_window(claim, snippet.tokens, emb);
  if (snippet.score.sim < threshold) return std::nullopt;
  return snippet;
}

FoldPlan make_folds(std::span<const ClaimInstance> instances, std::uint64_t seed,
                    std::size_t folds) {
  if (folds < 1) throw ContractError("make_folds: need at least one fold");
  if (instances.size() < folds + 1) {
    throw DegenerateInputError("make_folds: " + std::to_string(instances.size()) +
                               " instances are too few for " + std::to_string(folds) +
                               " folds plus validation");
  }
  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  numeric::Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_validation = std::max<std::size_t>(1, instances.size() / 10);
  FoldPlan plan;
  plan.folds.resize(folds);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = instances[order[i]].id;
    if (i < n_validation) {
      plan.validation.push_back(id);
    } else {
      const std::size_t f = (i - n_validation) % folds;
      plan.folds[f].push_back(id);
      plan.fold_of[id] = f;
    }
  }
  return plan;
}

}  // namespace declare::corpus
