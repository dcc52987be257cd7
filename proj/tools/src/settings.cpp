#include "declare/cli/settings.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>

#include "declare/errors.hpp"

namespace declare::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::size_t to_count(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError(std::string(key) + ": expected a non-negative integer, got '" +
                     std::string(value) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError(std::string(key) + ": expected an unsigned integer, got '" +
                     std::string(value) + "'");
  }
  return out;
}

double to_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
  }
  return out;
}

corpus::LabelScheme to_labels(std::string_view value) {
  if (value == "binary") return corpus::LabelScheme::binary();
  if (value == "regression") return corpus::LabelScheme::regression();
  constexpr std::string_view prefix = "categorical:";
  if (value.starts_with(prefix)) {
    std::vector<std::string> names;
    std::string_view rest = value.substr(prefix.size());
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto name = trim(rest.substr(0, comma));
      if (name.empty()) throw UsageError("labels: empty class name");
      names.emplace_back(name);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (names.size() < 2) throw UsageError("labels: categorical needs at least two classes");
    return corpus::LabelScheme::categorical(std::move(names));
  }
  throw UsageError("labels: expected binary, regression or categorical:<a>,<b>,..., got '" +
                   std::string(value) + "'");
}

using Setter = std::function<void(Settings&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"word_dim", [](Settings& s, auto k, auto v) { s.hyper.word_dim = to_count(k, v); s.word_dim_explicit = true; }},
      {"claim_source_dim", [](Settings& s, auto k, auto v) { s.hyper.claim_source_dim = to_count(k, v); }},
      {"article_source_dim", [](Settings& s, auto k, auto v) { s.hyper.article_source_dim = to_count(k, v); }},
      {"lstm_hidden", [](Settings& s, auto k, auto v) { s.hyper.lstm_hidden = to_count(k, v); }},
      {"dense_size", [](Settings& s, auto k, auto v) { s.hyper.dense_size = to_count(k, v); }},
      {"dropout", [](Settings& s, auto k, auto v) { s.hyper.dropout = to_real(k, v); }},
      {"labels", [](Settings& s, auto, auto v) { s.dataset.labels = to_labels(v); }},
      {"learning_rate", [](Settings& s, auto k, auto v) { s.train.learning_rate = to_real(k, v); }},
      {"beta1", [](Settings& s, auto k, auto v) { s.train.beta1 = to_real(k, v); }},
      {"beta2", [](Settings& s, auto k, auto v) { s.train.beta2 = to_real(k, v); }},
      {"epsilon", [](Settings& s, auto k, auto v) { s.train.epsilon = to_real(k, v); }},
      {"l2_lambda", [](Settings& s, auto k, auto v) { s.train.l2_lambda = to_real(k, v); }},
      {"batch_size", [](Settings& s, auto k, auto v) { s.train.batch_size = to_count(k, v); }},
      {"max_epochs", [](Settings& s, auto k, auto v) { s.train.max_epochs = to_count(k, v); }},
      {"patience", [](Settings& s, auto k, auto v) { s.train.patience = to_count(k, v); }},
      {"seed", [](Settings& s, auto k, auto v) { s.train.seed = to_u64(k, v); }},
      {"probability_clamp", [](Settings& s, auto k, auto v) { s.train.probability_clamp = to_real(k, v); }},
      {"precision",
       [](Settings& s, auto, auto v) {
         if (v == "32") s.train.precision = model::Precision::f32;
         else if (v == "64") s.train.precision = model::Precision::f64;
         else throw UsageError("precision: expected 32 or 64, got '" + std::string(v) + "'");
       }},
      {"claim_min_support", [](Settings& s, auto k, auto v) { s.dataset.claim_min_support = to_count(k, v); }},
      {"article_min_support", [](Settings& s, auto k, auto v) { s.dataset.article_min_support = to_count(k, v); }},
      {"jobs", [](Settings& s, auto k, auto v) { s.dataset.jobs = to_count(k, v); }},
      {"delta", [](Settings& s, auto k, auto v) { s.delta = to_real(k, v); }},
      {"folds", [](Settings& s, auto k, auto v) { s.folds = to_count(k, v); }},
      {"vocab_limit", [](Settings& s, auto k, auto v) { s.vocab_limit = to_count(k, v); }},
  };
  return table;
}

}  // namespace

KeyValues preset_values(std::string_view name) {
  if (name == "snopes") {
    return {{"word_dim", "100"}, {"claim_source_dim", "0"}, {"article_source_dim", "8"},
            {"lstm_hidden", "64"}, {"dense_size", "32"}, {"dropout", "0.5"},
            {"labels", "binary"}, {"claim_min_support", "5"}, {"article_min_support", "10"}};
  }
  if (name == "politifact") {
    return {{"word_dim", "100"}, {"claim_source_dim", "4"}, {"article_source_dim", "4"},
            {"lstm_hidden", "64"}, {"dense_size", "32"}, {"dropout", "0.5"},
            {"labels", "binary"}, {"claim_min_support", "5"}, {"article_min_support", "10"}};
  }
  if (name == "newstrust") {
    return {{"word_dim", "300"}, {"claim_source_dim", "8"}, {"article_source_dim", "8"},
            {"lstm_hidden", "64"}, {"dense_size", "64"}, {"dropout", "0.3"},
            {"labels", "regression"}, {"claim_min_support", "5"}, {"article_min_support", "10"}};
  }
  if (name == "semeval") {
    return {{"word_dim", "100"}, {"claim_source_dim", "4"}, {"article_source_dim", "4"},
            {"lstm_hidden", "16"}, {"dense_size", "8"}, {"dropout", "0.3"},
            {"labels", "categorical:true,false,unverified"}, {"claim_min_support", "5"},
            {"article_min_support", "5"}};
  }
  throw UsageError("unknown preset '" + std::string(name) +
                   "' (expected snopes, politifact, newstrust or semeval)");
}

KeyValues parse_config(std::istream& in) {
  KeyValues values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    values.insert_or_assign(std::string(key), std::string(value));
  }
  return values;
}

KeyValues load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return parse_config(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Settings resolve_settings(const KeyValues& values) {
  Settings settings;
  auto apply = [&settings](const KeyValues& layer) {
    for (const auto& [key, value] : layer) {
      if (key == "preset") continue;
      const auto it = setters().find(key);
      if (it == setters().end()) throw UsageError("unknown setting '" + key + "'");
      it->second(settings, key, value);
    }
  };
  if (auto preset = values.find("preset"); preset != values.end()) apply(preset_values(preset->second));
  apply(values);

  auto& hyper = settings.hyper;
  switch (settings.dataset.labels.kind) {
    case corpus::LabelKind::binary:
      hyper.head = model::Head::binary;
      hyper.classes = 2;
      break;
    case corpus::LabelKind::categorical:
      hyper.head = model::Head::categorical;
      hyper.classes = settings.dataset.labels.classes();
      break;
    case corpus::LabelKind::regression:
      hyper.head = model::Head::regression;
      hyper.classes = 1;
      break;
  }
  try {
    hyper.validate();
    settings.train.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (!(settings.delta >= 0.0 && settings.delta <= 1.0)) throw UsageError("delta must lie in [0, 1]");
  if (settings.folds < 2) throw UsageError("folds must be >= 2");
  if (settings.dataset.jobs == 0) throw UsageError("jobs must be >= 1");
  return settings;
}

std::filesystem::path resolve_input(const std::filesystem::path& path) {
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* dir = std::getenv("DECLARE_DATA_DIR"); dir && *dir) {
    auto candidate = std::filesystem::path(dir) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

}  // namespace declare::cli
