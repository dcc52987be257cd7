#include "declare/cli/cli.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "declare/checkpoint.hpp"
#include "declare/cli/settings.hpp"
#include "declare/corpus.hpp"
#include "declare/embeddings.hpp"
#include "declare/errors.hpp"
#include "declare/explain.hpp"
#include "declare/metrics.hpp"
#include "declare/training.hpp"
#include "json.hpp"

namespace declare::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  std::string precision;
  std::vector<std::string> set;
  CLI::Option* seed_option = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "key=value settings file");
  cmd->add_option("--preset", flags.preset, "dataset preset")
      ->check(CLI::IsMember({"snopes", "politifact", "newstrust", "semeval"}));
  flags.seed_option = cmd->add_option("--seed", flags.seed, "random seed");
  cmd->add_option("--precision", flags.precision, "training precision")
      ->check(CLI::IsMember({"32", "64"}));
  cmd->add_option("--set", flags.set, "override a setting (key=value), repeatable");
}

// Preset < config file < explicit flags.
Settings settings_from(const CommonFlags& flags, const KeyValues& extra) {
  KeyValues values;
  if (!flags.config.empty()) values = load_config(resolve_input(flags.config));
  if (!flags.preset.empty()) values["preset"] = flags.preset;
  for (const auto& [key, value] : extra) values[key] = value;
  if (flags.seed_option && flags.seed_option->count() > 0) values["seed"] = std::to_string(flags.seed);
  if (!flags.precision.empty()) values["precision"] = flags.precision;
  for (const auto& item : flags.set) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
    values[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return resolve_settings(values);
}

embeddings::WordEmbeddings load_words(const std::string& path, const Settings& settings) {
  std::optional<std::size_t> limit;
  if (settings.vocab_limit > 0) limit = settings.vocab_limit;
  return embeddings::load_word_vectors(resolve_input(path), limit);
}

void adopt_word_dim(Settings& settings, const embeddings::WordEmbeddings& words) {
  if (!settings.word_dim_explicit) settings.hyper.word_dim = words.dim();
  if (settings.hyper.word_dim != words.dim()) {
    throw UsageError("word_dim is " + std::to_string(settings.hyper.word_dim) +
                     " but the word vectors have dimension " + std::to_string(words.dim()));
  }
}

std::vector<corpus::ClaimInstance> load_corpus(const std::string& path,
                                               const corpus::LabelScheme& labels,
                                               bool require_labels) {
  corpus::IngestOptions options;
  options.labels = labels;
  options.require_labels = require_labels;
  return corpus::ingest(resolve_input(path), options).instances;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// File-system-safe rendering of a claim id.
std::string safe_name(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += keep ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "claim";
  return out;
}

std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string verdict_for(const model::Model& model, std::span<const double> credibility) {
  switch (model.hyper.head) {
    case model::Head::binary: return credibility[0] >= 0.5 ? "true" : "false";
    case model::Head::categorical: {
      const auto best = std::max_element(credibility.begin(), credibility.end()) - credibility.begin();
      return model.labels.class_names.at(static_cast<std::size_t>(best));
    }
    case model::Head::regression: return format_real(credibility[0]);
  }
  return {};
}

std::string label_name(const corpus::LabelScheme& labels, const std::optional<double>& label) {
  if (!label) return "unlabeled";
  switch (labels.kind) {
    case corpus::LabelKind::binary: return *label >= 0.5 ? "true" : "false";
    case corpus::LabelKind::categorical: return labels.class_names.at(static_cast<std::size_t>(*label));
    case corpus::LabelKind::regression: return format_real(*label);
  }
  return {};
}

// --- ingest ---------------------------------------------------------------

struct IngestFlags {
  std::string input, embeddings, out, blocklist;
  double delta = 0.0;
  CLI::Option* delta_option = nullptr;
};

int run_ingest(const IngestFlags& flags, const CommonFlags& common, std::ostream& out) {
  KeyValues extra;
  if (flags.delta_option->count() > 0) extra["delta"] = format_real(flags.delta);
  auto settings = settings_from(common, extra);
  const auto words = load_words(flags.embeddings, settings);

  corpus::IngestOptions options;
  options.labels = settings.dataset.labels;
  if (!flags.blocklist.empty()) options.source_blocklist = corpus::load_blocklist(resolve_input(flags.blocklist));
  auto result = corpus::ingest(resolve_input(flags.input), options);

  std::vector<corpus::ClaimInstance> kept;
  std::size_t below_threshold = 0;
  for (auto& instance : result.instances) {
    std::vector<corpus::Article> articles;
    for (auto& article : instance.articles) {
      auto snippet = corpus::extract_snippet(instance.claim, article.tokens, words, settings.delta);
      if (!snippet) {
        ++below_threshold;
        continue;
      }
      articles.push_back({std::move(snippet->tokens), std::move(article.source)});
    }
    if (articles.empty()) continue;
    instance.articles = std::move(articles);
    kept.push_back(std::move(instance));
  }

  std::ofstream file(flags.out, std::ios::trunc);
  if (!file) throw IoError("cannot write '" + flags.out + "'");
  corpus::write_corpus(file, kept, settings.dataset.labels);
  file.close();
  if (!file) throw IoError("cannot write '" + flags.out + "'");

  const auto counts = corpus::count_sources(kept);
  std::size_t articles = 0;
  for (const auto& c : kept) articles += c.articles.size();
  out << "claims=" << kept.size() << '\n'
      << "articles=" << articles << '\n'
      << "claim_sources=" << counts.claim_sources.size() << '\n'
      << "article_sources=" << counts.article_sources.size() << '\n'
      << "articles_below_delta=" << below_threshold << '\n'
      << "blocked_articles=" << result.blocked_articles << '\n'
      << "skipped_claims=" << result.skipped_claims + (result.instances.size() - kept.size()) << '\n';
  return 0;
}

// --- train ----------------------------------------------------------------

struct TrainFlags {
  std::string corpus, embeddings, out;
  std::size_t folds = 0;
  CLI::Option* folds_option = nullptr;
  bool final_model = false;
};

std::string log_line(std::optional<std::size_t> fold, const training::EpochRecord& record) {
  std::ostringstream os;
  if (fold) os << "fold=" << *fold << ' ';
  os << "epoch=" << record.epoch << " train_loss=" << format_real(record.train_loss)
     << " validation_metric="
     << (record.validation_metric ? format_real(*record.validation_metric) : "none")
     << (record.improved ? " best" : "") << '\n';
  return os.str();
}

int run_train(const TrainFlags& flags, const CommonFlags& common, std::ostream& out) {
  KeyValues extra;
  if (flags.folds_option->count() > 0) extra["folds"] = std::to_string(flags.folds);
  auto settings = settings_from(common, extra);
  const auto words = load_words(flags.embeddings, settings);
  adopt_word_dim(settings, words);
  const auto instances = load_corpus(flags.corpus, settings.dataset.labels, true);
  const fs::path dir = flags.out;
  ensure_directory(dir);

  const auto plan = corpus::make_folds(instances, settings.train.seed, settings.folds);
  std::mutex log_mutex;
  const auto results = training::train(
      instances, plan, settings.hyper, settings.train, words, settings.dataset,
      [&](std::size_t fold, const training::EpochRecord& record) {
        std::lock_guard lock(log_mutex);
        out << log_line(fold, record);
      });

  double total = 0.0;
  for (const auto& result : results) {
    const auto stem = "fold-" + std::to_string(result.fold);
    model::save_checkpoint(dir / (stem + ".ckpt"), result.trained.model);
    write_file(dir / (stem + ".metrics"), result.test.to_key_values());
    out << "fold " << result.fold << " (best epoch " << result.trained.best_epoch << ")\n"
        << result.test.to_text();
    total += training::selection_metric(result.test);
  }
  out << "mean test " << (training::lower_is_better(settings.hyper.head) ? "MSE" : "selection metric")
      << ": " << format_real(total / static_cast<double>(results.size())) << '\n';

  if (flags.final_model) {
    std::vector<corpus::ClaimInstance> train_split, validation;
    for (const auto& instance : instances) {
      (plan.fold_of.contains(instance.id) ? train_split : validation).push_back(instance);
    }
    auto trained = training::train_model(
        train_split, validation, settings.hyper, settings.train, words, settings.dataset,
        [&out](const training::EpochRecord& record, const model::ModelParams<double>&) {
          out << "final " << log_line(std::nullopt, record);
          return false;
        });
    model::save_checkpoint(dir / "model.ckpt", trained.model);
    out << "final model: " << (dir / "model.ckpt").string() << '\n';
  }
  return 0;
}

// --- predict --------------------------------------------------------------

struct ModelFlags {
  std::string model, corpus, embeddings, out;
};

struct Loaded {
  model::Model model;
  embeddings::WordEmbeddings words;
  std::vector<corpus::ClaimInstance> claims;
};

Loaded load_for_inference(const ModelFlags& flags, const Settings& settings) {
  auto model = model::load_checkpoint(resolve_input(flags.model));
  auto words = load_words(flags.embeddings, settings);
  auto claims = load_corpus(flags.corpus, model.labels, false);
  return {std::move(model), std::move(words), std::move(claims)};
}

int run_predict(const ModelFlags& flags, const CommonFlags& common, std::ostream& out) {
  const auto settings = settings_from(common, {});
  const auto loaded = load_for_inference(flags, settings);
  std::ostringstream table;
  table << "id\tverdict";
  if (loaded.model.hyper.head == model::Head::categorical) {
    for (const auto& name : loaded.model.labels.class_names) table << "\tp_" << name;
  } else {
    table << "\tcredibility";
  }
  table << '\n';
  for (const auto& claim : loaded.claims) {
    const auto prediction = model::predict(loaded.model, claim, loaded.words);
    table << claim.id << '\t' << verdict_for(loaded.model, prediction.credibility);
    for (double v : prediction.credibility) table << '\t' << format_real(v);
    table << '\n';
  }
  if (flags.out.empty()) {
    out << table.str();
  } else {
    write_file(flags.out, table.str());
  }
  return 0;
}

// --- explain --------------------------------------------------------------

struct ExplainFlags {
  ModelFlags files;
  std::string format = "html";
};

void write_projection(const fs::path& path, std::span<const std::vector<double>> vectors,
                      std::span<const std::string> names, std::span<const std::string> labels,
                      std::ostream& out) {
  try {
    const auto projection = explain::pca_project(vectors, names, labels);
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot write '" + path.string() + "'");
    explain::write_projection_csv(file, projection);
    out << "projection " << path.string() << " explained_variance=" << format_real(projection.explained_variance[0])
        << ',' << format_real(projection.explained_variance[1]) << '\n';
  } catch (const DegenerateInputError& e) {
    out << "projection " << path.string() << " skipped: " << e.what() << '\n';
  } catch (const ContractError& e) {
    out << "projection " << path.string() << " skipped: " << e.what() << '\n';
  }
}

int run_explain(const ExplainFlags& flags, const CommonFlags& common, std::ostream& out) {
  const auto format = explain::parse_format(flags.format);
  const auto settings = settings_from(common, {});
  const auto loaded = load_for_inference(flags.files, settings);
  const auto& model = loaded.model;
  const bool to_files = !flags.files.out.empty();
  if (!to_files && format != explain::Format::ansi) {
    throw UsageError("--out is required for html and structured output");
  }
  const fs::path dir = flags.files.out;
  if (to_files) ensure_directory(dir);

  std::vector<std::vector<double>> g_vectors;
  std::vector<std::string> g_names, g_labels;
  for (const auto& claim : loaded.claims) {
    const auto encoded = model::encode(model, claim, loaded.words);
    std::vector<model::ForwardTrace<double>> traces;
    std::vector<std::vector<double>> outputs;
    for (const auto& article : encoded.articles) {
      traces.push_back(model::run_article(model.params, model.hyper, encoded, article));
      outputs.push_back(traces.back().output);
    }
    const auto credibility = model::aggregate_outputs(outputs);
    const auto verdict = verdict_for(model, credibility);

    std::vector<explain::AttentionAnnotation> annotations;
    for (std::size_t m = 0; m < traces.size(); ++m) {
      auto a = explain::annotate(traces[m], claim.articles[m].tokens, verdict);
      a.claim_id = claim.id;
      a.claim = join(claim.claim);
      a.source = claim.articles[m].source;
      annotations.push_back(std::move(a));
      g_vectors.push_back(traces[m].article_vector);
      g_names.push_back(claim.id + "/" + std::to_string(m));
      g_labels.push_back(label_name(model.labels, claim.label));
    }

    switch (format) {
      case explain::Format::ansi:
        for (const auto& a : annotations) out << explain::render(a, format);
        break;
      case explain::Format::html:
        write_file(dir / (safe_name(claim.id) + ".html"), explain::render_html_page(annotations));
        break;
      case explain::Format::structured: {
        json doc{{"claim_id", claim.id}, {"verdict", verdict}, {"credibility", credibility}};
        doc["articles"] = json::array();
        for (const auto& a : annotations) doc["articles"].push_back(json::parse(explain::render(a, format)));
        write_file(dir / (safe_name(claim.id) + ".json"), doc.dump(2) + "\n");
        break;
      }
    }
  }

  if (to_files) {
    write_projection(dir / "articles_projection.csv", g_vectors, g_names, g_labels, out);
    const auto& table = model.params.article_sources;
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < table.rows(); ++r) rows.emplace_back(table.row(r).begin(), table.row(r).end());
    const auto names = model.article_sources.row_names();
    const std::vector<std::string> labels(rows.size(), "article_source");
    write_projection(dir / "sources_projection.csv", rows, names, labels, out);
  }
  return 0;
}

// --- eval -----------------------------------------------------------------

struct EvalFlags {
  std::string predictions, corpus, out, format = "text";
};

int run_eval(const EvalFlags& flags, const CommonFlags& common, std::ostream& out) {
  const auto settings = settings_from(common, {});
  const auto& labels = settings.dataset.labels;
  const auto claims = load_corpus(flags.corpus, labels, true);
  std::map<std::string, double, std::less<>> truth;
  for (const auto& c : claims) truth.emplace(c.id, *c.label);

  const auto path = resolve_input(flags.predictions);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  const std::size_t width = labels.kind == corpus::LabelKind::categorical ? labels.classes() : 1;
  std::vector<double> scores, targets;
  std::vector<int> binary;
  std::vector<std::vector<double>> distributions;
  std::vector<std::size_t> classes;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("id\t")) continue;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, '\t');) fields.push_back(field);
    if (fields.size() != 2 + width) {
      throw ParseError(path.string() + ": expected " + std::to_string(2 + width) + " columns", line_no);
    }
    const auto it = truth.find(fields[0]);
    if (it == truth.end()) throw ParseError(path.string() + ": unknown claim '" + fields[0] + "'", line_no);
    std::vector<double> values;
    for (std::size_t i = 2; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(fields[i], &used));
        if (used != fields[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": malformed number '" + fields[i] + "'", line_no);
      }
    }
    switch (labels.kind) {
      case corpus::LabelKind::binary:
        scores.push_back(values[0]);
        binary.push_back(it->second >= 0.5 ? 1 : 0);
        break;
      case corpus::LabelKind::categorical:
        distributions.push_back(values);
        classes.push_back(static_cast<std::size_t>(it->second));
        break;
      case corpus::LabelKind::regression:
        scores.push_back(values[0]);
        targets.push_back(it->second);
        break;
    }
  }
  metrics::MetricReport report;
  switch (labels.kind) {
    case corpus::LabelKind::binary: report = metrics::classification_report(scores, binary); break;
    case corpus::LabelKind::categorical:
      report = metrics::categorical_report(distributions, classes, labels.class_names);
      break;
    case corpus::LabelKind::regression: report = metrics::regression_report(scores, targets); break;
  }
  out << (flags.format == "kv" ? report.to_key_values() : report.to_text());
  if (!flags.out.empty()) write_file(flags.out, report.to_key_values());
  return 0;
}

// --- gradcheck ------------------------------------------------------------

struct GradFlags {
  std::size_t probes = 6;
  std::string head = "binary";
  double tolerance = 1e-4;
};

int run_gradcheck(const GradFlags& flags, const CommonFlags& common, std::ostream& out,
                  std::ostream& err) {
  const auto settings = settings_from(common, {});
  if (settings.train.precision != model::Precision::f64) {
    throw UsageError("gradcheck runs at 64-bit precision only");
  }
  const auto head = flags.head == "categorical" ? model::Head::categorical
                    : flags.head == "regression" ? model::Head::regression
                                                 : model::Head::binary;
  training::GradCheckOptions options;
  options.probes_per_group = flags.probes;
  options.seed = settings.train.seed;
  const auto report = training::gradient_check(training::tiny_problem(settings.train.seed, head), options);
  for (std::size_t g = 0; g < report.group_error.size(); ++g) {
    out << "group=" << model::group_name(g) << " error=" << format_real(report.group_error[g])
        << " max_gradient=" << format_real(report.group_gradient[g]) << '\n';
  }
  out << "probes=" << report.probes << '\n'
      << "max_relative_error=" << format_real(report.max_relative_error) << '\n';
  if (!(report.max_relative_error < flags.tolerance)) {
    err << "declare: gradient check failed: max relative error " << report.max_relative_error
        << " >= " << flags.tolerance << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidence-aware claim credibility: ingest, train, predict, explain, evaluate"};
  app.name("declare");
  app.require_subcommand(1);

  // One set per subcommand: option handles are per-subcommand.
  std::array<CommonFlags, 6> common;

  IngestFlags ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "extract snippets and write a model-ready corpus");
  ingest_cmd->add_option("--input", ingest.input, "raw corpus (JSON lines)")->required();
  ingest_cmd->add_option("--embeddings", ingest.embeddings, "word vectors (GloVe text format)")->required();
  ingest_cmd->add_option("--out", ingest.out, "output corpus")->required();
  ingest_cmd->add_option("--blocklist", ingest.blocklist, "article sources to drop, one per line");
  ingest.delta_option = ingest_cmd->add_option("--delta", ingest.delta, "snippet relevance threshold");
  add_common(ingest_cmd, common[0]);

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "cross-validated training");
  train_cmd->add_option("--corpus", train.corpus, "ingested corpus")->required();
  train_cmd->add_option("--embeddings", train.embeddings, "word vectors")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train.folds_option = train_cmd->add_option("--folds", train.folds, "number of folds");
  train_cmd->add_flag("--final", train.final_model, "also train one model on all non-validation claims");
  add_common(train_cmd, common[1]);

  ModelFlags predict;
  auto* predict_cmd = app.add_subcommand("predict", "score claims with a trained model");
  predict_cmd->add_option("--model", predict.model, "checkpoint")->required();
  predict_cmd->add_option("--corpus", predict.corpus, "ingested corpus")->required();
  predict_cmd->add_option("--embeddings", predict.embeddings, "word vectors")->required();
  predict_cmd->add_option("--out", predict.out, "output file (default stdout)");
  add_common(predict_cmd, common[2]);

  ExplainFlags explain_flags;
  auto* explain_cmd = app.add_subcommand("explain", "attention annotations and projections");
  explain_cmd->add_option("--model", explain_flags.files.model, "checkpoint")->required();
  explain_cmd->add_option("--corpus", explain_flags.files.corpus, "ingested corpus")->required();
  explain_cmd->add_option("--embeddings", explain_flags.files.embeddings, "word vectors")->required();
  explain_cmd->add_option("--out", explain_flags.files.out, "output directory");
  explain_cmd->add_option("--format", explain_flags.format, "ansi, html or structured");
  add_common(explain_cmd, common[3]);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "metrics from a predictions file and labels");
  eval_cmd->add_option("--predictions", eval.predictions, "output of predict")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "labelled corpus")->required();
  eval_cmd->add_option("--out", eval.out, "write key=value report here");
  eval_cmd->add_option("--format", eval.format, "text or kv")->check(CLI::IsMember({"text", "kv"}));
  add_common(eval_cmd, common[4]);

  GradFlags grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  grad_cmd->add_option("--probes", grad.probes, "probes per parameter group")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--head", grad.head, "output head")
      ->check(CLI::IsMember({"binary", "categorical", "regression"}));
  grad_cmd->add_option("--tolerance", grad.tolerance, "maximum accepted relative error");
  add_common(grad_cmd, common[5]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    std::replace(what.begin(), what.end(), '\n', ' ');
    err << "declare: usage error: " << what << '\n';
    return 2;
  }

  try {
    if (app.got_subcommand(ingest_cmd)) return run_ingest(ingest, common[0], out);
    if (app.got_subcommand(train_cmd)) return run_train(train, common[1], out);
    if (app.got_subcommand(predict_cmd)) return run_predict(predict, common[2], out);
    if (app.got_subcommand(explain_cmd)) return run_explain(explain_flags, common[3], out);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval, common[4], out);
    if (app.got_subcommand(grad_cmd)) return run_gradcheck(grad, common[5], out, err);
  } catch (const UsageError& e) {
    err << "declare: usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::replace(what.begin(), what.end(), '\n', ' ');
    err << "declare: error: " << what << '\n';
    return 1;
  }
  err << "declare: usage error: no subcommand\n";
  return 2;
}

}  // namespace declare::cli
