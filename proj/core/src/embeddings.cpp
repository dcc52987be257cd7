#include "declare/embeddings.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

#include "declare/errors.hpp"
#include "declare/numeric/random.hpp"

namespace declare::embeddings {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t begin = i;
    std::size_t end = j;
    while (begin < end && std::ispunct(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(text[end - 1]))) --end;
    if (begin < end) {
      std::string token(text.substr(begin, end - begin));
      for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      tokens.push_back(std::move(token));
    }
    i = j;
  }
  return tokens;
}

std::size_t Vocabulary::add(std::string token) {
  if (index_.contains(token)) throw ContractError("vocabulary: duplicate token '" + token + "'");
  const std::size_t id = tokens_.size();
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

WordEmbeddings::WordEmbeddings(Vocabulary vocabulary, Matrix<double> vectors)
    : vocabulary_(std::move(vocabulary)), vectors_(std::move(vectors)), zero_(vectors_.cols()) {
  if (vocabulary_.size() != vectors_.rows()) {
    throw ShapeError("word embeddings: " + std::to_string(vocabulary_.size()) +
                     " tokens for matrix " + vectors_.shape());
  }
}

std::span<const double> WordEmbeddings::lookup(std::string_view token) const {
  if (auto id = vocabulary_.find(token)) return vectors_.row(*id);
  return zero_;
}

std::uint64_t WordEmbeddings::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  feed(std::to_string(dim()));
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    feed("\n");
    feed(vocabulary_.token(i));
  }
  return h;
}

WordEmbeddings parse_word_vectors(std::istream& in, std::optional<std::size_t> vocab_limit) {
  Vocabulary vocab;
  std::vector<double> data;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while ((!vocab_limit || vocab.size() < *vocab_limit) && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::string_view rest(line);
    const auto token_end = rest.find(' ');
    if (token_end == std::string_view::npos || token_end == 0) {
      throw ParseError("expected '<token> <values...>'", line_no);
    }
    std::string token(rest.substr(0, token_end));
    rest.remove_prefix(token_end);

    std::size_t count = 0;
    while (true) {
      while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
      if (rest.empty()) break;
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
      if (ec != std::errc() || (ptr != rest.data() + rest.size() && *ptr != ' ' && *ptr != '\t')) {
        throw ParseError("malformed number for token '" + token + "'", line_no);
      }
      data.push_back(value);
      ++count;
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    }
    if (count == 0) throw ParseError("token '" + token + "' has no vector", line_no);
    if (dim == 0) {
      dim = count;
    } else if (count != dim) {
      throw ParseError("ragged line: expected " + std::to_string(dim) + " values, found " +
                           std::to_string(count),
                       line_no);
    }
    try {
      vocab.add(std::move(token));
    } catch (const ContractError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (vocab.size() == 0) throw DegenerateInputError("word vectors: empty input");
  const std::size_t rows = vocab.size();
  return WordEmbeddings(std::move(vocab), Matrix<double>(rows, dim, std::move(data)));
}

WordEmbeddings load_word_vectors(const std::filesystem::path& path,
                                 std::optional<std::size_t> vocab_limit) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word vectors '" + path.string() + "'");
  try {
    return parse_word_vectors(in, vocab_limit);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::size_t SourceVocabulary::resolve(std::string_view name) const {
  auto it = index.find(name);
  return it == index.end() ? dummy_row : it->second;
}

std::vector<std::string> SourceVocabulary::row_names() const {
  std::vector<std::string> names(rows);
  names[dummy_row] = std::string(kDummySourceName);
  for (const auto& [name, row] : index) names[row] = name;
  return names;
}

SourceEmbeddingTable build_source_table(const std::map<std::string, std::size_t>& counts,
                                        std::size_t min_support, std::size_t dim,
                                        std::uint64_t seed) {
  if (dim == 0) throw ContractError("source table: embedding dimension must be >= 1");
  SourceEmbeddingTable table;
  auto& vocab = table.vocabulary;
  vocab.dummy_row = 0;
  std::size_t next = 1;
  for (const auto& [name, count] : counts) {
    if (count >= min_support) vocab.index.emplace(name, next++);
  }
  vocab.rows = next;
  numeric::Rng rng(seed);
  table.vectors = numeric::uniform_matrix(next, dim, kSourceInitRange, rng);
  return table;
}

std::vector<double> claim_mean(std::span<const std::string> tokens, const WordEmbeddings& emb) {
  if (tokens.empty()) throw DegenerateInputError("claim_mean: claim has no tokens");
  std::vector<double> mean(emb.dim(), 0.0);
  for (const auto& token : tokens) {
    auto v = emb.lookup(token);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  const double l = static_cast<double>(tokens.size());
  for (auto& x : mean) x /= l;
  return mean;
}

}  // namespace declare::embeddings
