#include "declare/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "declare/errors.hpp"

namespace declare::model {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'L', 'R'};
// Guards against absurd allocations when reading a corrupt file.
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint64_t u64() {
    std::uint64_t v = 0;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t count() {
    const auto v = u64();
    if (v > kMaxCount) throw ParseError("checkpoint: implausible length field");
    return v;
  }
  double f64() {
    double v = 0.0;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    std::string s(count(), '\0');
    raw(s.data(), s.size());
    return s;
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("checkpoint: truncated file");
  }

 private:
  std::istream& in_;
};

void write_sources(Writer& w, const embeddings::SourceVocabulary& vocab) {
  w.u64(vocab.rows);
  w.u64(vocab.dummy_row);
  w.u64(vocab.index.size());
  for (const auto& [name, row] : vocab.index) {
    w.str(name);
    w.u64(row);
  }
}

embeddings::SourceVocabulary read_sources(Reader& r) {
  embeddings::SourceVocabulary vocab;
  vocab.rows = r.count();
  vocab.dummy_row = r.count();
  const auto n = r.count();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = r.str();
    const auto row = r.count();
    if (row >= vocab.rows) throw ParseError("checkpoint: source row out of range");
    vocab.index.emplace(std::move(name), row);
  }
  return vocab;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model) {
  Writer w(out);
  w.raw(kMagic, sizeof kMagic);
  w.u64(kCheckpointVersion);
  w.u64(model.precision == Precision::f32 ? 32 : 64);

  const auto& h = model.hyper;
  w.u64(h.word_dim);
  w.u64(h.claim_source_dim);
  w.u64(h.article_source_dim);
  w.u64(h.lstm_hidden);
  w.u64(h.dense_size);
  w.f64(h.dropout);
  w.u64(static_cast<std::uint64_t>(h.head));
  w.u64(h.classes);

  w.u64(static_cast<std::uint64_t>(model.labels.kind));
  w.u64(model.labels.class_names.size());
  for (const auto& name : model.labels.class_names) w.str(name);

  w.u64(model.vocabulary_fingerprint);
  write_sources(w, model.claim_sources);
  write_sources(w, model.article_sources);

  const auto groups = model.params.groups();
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    const auto& m = *groups[g];
    w.str(std::string(group_name(g)));
    w.u64(m.rows());
    w.u64(m.cols());
    for (double v : m.data()) w.f64(v);
  }
  if (!out) throw IoError("checkpoint: write failed");
}

Model load_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("checkpoint: bad magic");
  const auto version = r.u64();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  Model model;
  const auto bits = r.u64();
  if (bits != 32 && bits != 64) throw ParseError("checkpoint: bad precision tag");
  model.precision = bits == 32 ? Precision::f32 : Precision::f64;

  auto& h = model.hyper;
  h.word_dim = r.count();
  h.claim_source_dim = r.count();
  h.article_source_dim = r.count();
  h.lstm_hidden = r.count();
  h.dense_size = r.count();
  h.dropout = r.f64();
  const auto head = r.u64();
  if (head > 2) throw ParseError("checkpoint: bad head tag");
  h.head = static_cast<Head>(head);
  h.classes = r.count();
  h.validate();

  const auto kind = r.u64();
  if (kind > 2) throw ParseError("checkpoint: bad label kind");
  model.labels.kind = static_cast<corpus::LabelKind>(kind);
  model.labels.class_names.resize(r.count());
  for (auto& name : model.labels.class_names) name = r.str();

  model.vocabulary_fingerprint = r.u64();
  model.claim_sources = read_sources(r);
  model.article_sources = read_sources(r);

  auto groups = model.params.groups();
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    const auto name = r.str();
    if (name != group_name(g)) throw ParseError("checkpoint: expected group " + std::string(group_name(g)));
    const auto rows = r.count();
    const auto cols = r.count();
    if (rows * cols > kMaxCount) throw ParseError("checkpoint: implausible matrix size");
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = r.f64();
    *groups[g] = Matrix<double>(rows, cols, std::move(data));
  }
  model.params.check_shapes(h);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  save_checkpoint(out, model);
  out.close();
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  try {
    return load_checkpoint(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

EncodedClaim<double> encode(const Model& model, const corpus::ClaimInstance& instance,
                            const embeddings::WordEmbeddings& words) {
  if (words.fingerprint() != model.vocabulary_fingerprint) {
    throw ContractError("word vectors do not match the vocabulary the model was trained with");
  }
  if (words.dim() != model.hyper.word_dim) {
    throw ShapeError("word vectors have dimension " + std::to_string(words.dim()) +
                     ", model expects " + std::to_string(model.hyper.word_dim));
  }
  return encode_claim<double>(instance, words,
                              model.hyper.uses_claim_source() ? &model.claim_sources : nullptr,
                              model.article_sources);
}

ClaimPrediction predict(const Model& model, const corpus::ClaimInstance& instance,
                        const embeddings::WordEmbeddings& words) {
  return predict_claim(model.params, model.hyper, encode(model, instance, words));
}

}  // namespace declare::model
