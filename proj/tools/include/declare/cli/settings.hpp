#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "declare/model.hpp"
#include "declare/training.hpp"

namespace declare::cli {

using KeyValues = std::map<std::string, std::string, std::less<>>;

// Dataset presets: architecture sizes, dropout, label scheme and minimum
// source support for snopes, politifact, newstrust and semeval.
KeyValues preset_values(std::string_view name);

// `key = value` lines; blank lines and `#` comments are ignored.
KeyValues parse_config(std::istream& in);
KeyValues load_config(const std::filesystem::path& path);

struct Settings {
  model::Hyperparams hyper;
  bool word_dim_explicit = false;  // otherwise taken from the word vectors
  training::TrainConfig train;
  training::DatasetOptions dataset;
  double delta = 0.5;
  std::size_t folds = 10;
  std::size_t vocab_limit = 0;  // 0 = whole file
};

// Layers, lowest precedence first: built-in defaults, the preset named by
// `preset`, then everything else in `values`. Throws UsageError for unknown
// keys or malformed values.
Settings resolve_settings(const KeyValues& values);

// Relative paths that do not exist are looked up under $DECLARE_DATA_DIR.
std::filesystem::path resolve_input(const std::filesystem::path& path);

}  // namespace declare::cli
