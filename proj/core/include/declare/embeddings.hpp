#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "declare/numeric/matrix.hpp"

namespace declare::embeddings {

using numeric::Matrix;

// Lowercases, splits on whitespace and strips ASCII punctuation from both ends
// of each token. Tokens that are pure punctuation are dropped.
std::vector<std::string> tokenize(std::string_view text);

enum class UnknownTokenPolicy { zero_vector };

// Dense token <-> index bijection, indices assigned in insertion order.
class Vocabulary {
 public:
  // Returns the new index; throws ContractError if the token is present.
  std::size_t add(std::string token);
  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t size() const noexcept { return tokens_.size(); }
  UnknownTokenPolicy unknown_policy() const noexcept { return UnknownTokenPolicy::zero_vector; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
  std::vector<std::string> tokens_;
};

// Frozen |V|×d word vectors. Lookups of absent tokens yield the zero vector.
class WordEmbeddings {
 public:
  WordEmbeddings(Vocabulary vocabulary, Matrix<double> vectors);

  std::size_t dim() const noexcept { return vectors_.cols(); }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  const Matrix<double>& vectors() const noexcept { return vectors_; }
  bool contains(std::string_view token) const { return vocabulary_.find(token).has_value(); }
  std::span<const double> lookup(std::string_view token) const;

  // FNV-1a over the dimension and every token in index order. Checkpoints
  // record it so a model is never paired with a different vocabulary.
  std::uint64_t fingerprint() const;

 private:
  Vocabulary vocabulary_;
  Matrix<double> vectors_;
  std::vector<double> zero_;
};

// GloVe text format: `<token> <f1> ... <fd>` per line, no header.
WordEmbeddings parse_word_vectors(std::istream& in, std::optional<std::size_t> vocab_limit = {});
WordEmbeddings load_word_vectors(const std::filesystem::path& path,
                                 std::optional<std::size_t> vocab_limit = {});

// Range of the uniform initializer for source embedding rows.
inline constexpr double kSourceInitRange = 0.05;
inline constexpr std::string_view kDummySourceName = "<dummy>";

// Source name -> embedding row. Row 0 is the dummy bucket shared by every
// source below the minimum support and by sources never seen at build time,
// so resolve() is total.
struct SourceVocabulary {
  std::map<std::string, std::size_t, std::less<>> index;
  std::size_t dummy_row = 0;
  std::size_t rows = 1;

  std::size_t resolve(std::string_view name) const;
  // Name per row; the dummy row is named kDummySourceName.
  std::vector<std::string> row_names() const;
  friend bool operator==(const SourceVocabulary&, const SourceVocabulary&) = default;
};

// Trainable per-source vectors, one row per vocabulary row.
struct SourceEmbeddingTable {
  SourceVocabulary vocabulary;
  Matrix<double> vectors;

  std::size_t resolve(std::string_view name) const { return vocabulary.resolve(name); }
  std::size_t rows() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
};

SourceEmbeddingTable build_source_table(const std::map<std::string, std::size_t>& counts,
                                        std::size_t min_support, std::size_t dim,
                                        std::uint64_t seed);

// c̄ = (1/l) Σ c_l. Out-of-vocabulary tokens contribute zero but still count
// toward l.
std::vector<double> claim_mean(std::span<const std::string> tokens, const WordEmbeddings& emb);

}  // namespace declare::embeddings
