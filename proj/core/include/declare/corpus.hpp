#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "declare/embeddings.hpp"

namespace declare::corpus {

enum class LabelKind { binary, categorical, regression };

// How record labels are interpreted. Binary labels are stored as 1 (true,
// credible) or 0; categorical labels as the class index into `class_names`;
// regression labels as the raw score.
struct LabelScheme {
  LabelKind kind = LabelKind::binary;
  std::vector<std::string> class_names = {"false", "true"};

  static LabelScheme binary() { return {}; }
  static LabelScheme categorical(std::vector<std::string> names) {
    return {LabelKind::categorical, std::move(names)};
  }
  static LabelScheme regression() { return {LabelKind::regression, {}}; }
  std::size_t classes() const { return kind == LabelKind::regression ? 1 : class_names.size(); }
  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;
};

struct Article {
  std::vector<std::string> tokens;
  std::string source;
};

struct ClaimInstance {
  std::string id;
  std::vector<std::string> claim;
  std::optional<std::string> claim_source;
  std::vector<Article> articles;
  std::optional<double> label;
};

struct IngestOptions {
  LabelScheme labels;
  std::set<std::string, std::less<>> source_blocklist;
  bool require_labels = true;
};

struct IngestResult {
  std::vector<ClaimInstance> instances;
  std::size_t skipped_claims = 0;   // no usable article left
  std::size_t blocked_articles = 0;
  std::size_t empty_articles = 0;
};

// Line-delimited JSON records:
//   {"id": ..., "claim": ..., "claim_source": ... | null, "label": ...,
//    "articles": [{"text": ..., "source": ...}, ...]}
IngestResult ingest(std::istream& in, const IngestOptions& options);
IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options);

// Writes instances in the ingest format with token lists joined by spaces.
void write_corpus(std::ostream& out, std::span<const ClaimInstance> instances,
                  const LabelScheme& labels);

std::set<std::string, std::less<>> load_blocklist(const std::filesystem::path& path);

// true, mostly true, half true -> true; mostly false, false, pants-on-fire ->
// false. Case, hyphens and underscores are ignored.
bool map_politifact_label(std::string_view rating);

// Number of claims per claim source and of articles per article source.
struct SourceCounts {
  std::map<std::string, std::size_t> claim_sources;
  std::map<std::string, std::size_t> article_sources;
};
SourceCounts count_sources(std::span<const ClaimInstance> instances);

inline constexpr double kDefaultSnippetThreshold = 0.5;
inline constexpr std::size_t kSnippetLength = 100;

struct SnippetScore {
  double sim_bow = 0.0;
  double sim_semantic = 0.0;
  double sim = 0.0;
};

struct Snippet {
  std::size_t start = 0;
  std::vector<std::string> tokens;
  SnippetScore score;
};

// Scores one window: fraction of distinct claim words present in the window
// times the cosine between the mean claim and mean window embeddings (0 when
// either mean is the zero vector).
SnippetScore score_window(std::span<const std::string> claim, std::span<const std::string> window,
                          const embeddings::WordEmbeddings& emb);

// Best `length`-token window (stride 1, earliest start on ties). Articles
// shorter than `length` are taken whole. Empty when the best sim < threshold.
std::optional<Snippet> extract_snippet(std::span<const std::string> claim,
                                       std::span<const std::string> article,
                                       const embeddings::WordEmbeddings& emb,
                                       double threshold = kDefaultSnippetThreshold,
                                       std::size_t length = kSnippetLength);

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;
  std::vector<std::string> validation;
  std::map<std::string, std::size_t> fold_of;

  std::size_t fold_count() const noexcept { return folds.size(); }
};

// Seeded shuffle, 10% (floor, at least 1) held out for validation and the rest
// dealt round-robin into `folds` folds.
FoldPlan make_folds(std::span<const ClaimInstance> instances, std::uint64_t seed,
                    std::size_t folds = 10);

}  // namespace declare::corpus
