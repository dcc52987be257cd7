#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "declare/corpus.hpp"
#include "declare/embeddings.hpp"
#include "declare/model.hpp"

namespace declare::model {

enum class Precision { f32, f64 };

// Everything needed to score new claims: architecture, label scheme, source
// mappings, the fingerprint of the word vectors it was trained with, and the
// parameters (held at 64-bit; 32-bit runs widen exactly).
struct Model {
  Hyperparams hyper;
  corpus::LabelScheme labels;
  embeddings::SourceVocabulary claim_sources;
  embeddings::SourceVocabulary article_sources;
  std::uint64_t vocabulary_fingerprint = 0;
  Precision precision = Precision::f64;
  ModelParams<double> params;

  friend bool operator==(const Model&, const Model&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: "DCLR", version, then little-endian fields. Values are
// stored as IEEE doubles, so a save/load round trip is bit-exact.
void save_checkpoint(std::ostream& out, const Model& model);
Model load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// Encodes a claim with the model's source mappings. Throws ContractError when
// `words` is not the vocabulary the model was trained with.
EncodedClaim<double> encode(const Model& model, const corpus::ClaimInstance& instance,
                            const embeddings::WordEmbeddings& words);

ClaimPrediction predict(const Model& model, const corpus::ClaimInstance& instance,
                        const embeddings::WordEmbeddings& words);

}  // namespace declare::model
