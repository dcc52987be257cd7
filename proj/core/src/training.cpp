#include "declare/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <string>

#include "declare/errors.hpp"
#include "declare/numeric/random.hpp"

namespace declare::training {

namespace {

using model::Head;

corpus::LabelScheme scheme_for(const Hyperparams& hyper) {
  switch (hyper.head) {
    case Head::binary: return corpus::LabelScheme::binary();
    case Head::regression: return corpus::LabelScheme::regression();
    case Head::categorical: {
      std::vector<std::string> names;
      for (std::size_t c = 0; c < hyper.classes; ++c) names.push_back(std::to_string(c));
      return corpus::LabelScheme::categorical(std::move(names));
    }
  }
  return {};
}

double require_label(const std::optional<double>& label, const std::string& id) {
  if (!label) throw ContractError("claim '" + id + "' has no label");
  return *label;
}

bool better(double candidate, double best, Head head) {
  return lower_is_better(head) ? candidate < best : candidate > best;
}

template <typename T>
std::vector<EncodedClaim<T>> encode_all(std::span<const corpus::ClaimInstance> instances,
                                        const embeddings::WordEmbeddings& words,
                                        const embeddings::SourceVocabulary* claim_sources,
                                        const embeddings::SourceVocabulary& article_sources) {
  std::vector<EncodedClaim<T>> out;
  out.reserve(instances.size());
  for (const auto& instance : instances) {
    out.push_back(model::encode_claim<T>(instance, words, claim_sources, article_sources));
  }
  return out;
}

template <typename T>
TrainedModel run_training(std::span<const corpus::ClaimInstance> train,
                          std::span<const corpus::ClaimInstance> validation,
                          const Hyperparams& hyper, const TrainConfig& config,
                          const embeddings::WordEmbeddings& words,
                          const DatasetOptions& options, const model::Model& shell,
                          const ModelParams<double>& init, const EpochCallback<double>& on_epoch) {
  const auto* claim_vocab = hyper.uses_claim_source() ? &shell.claim_sources : nullptr;
  const auto train_claims = encode_all<T>(train, words, claim_vocab, shell.article_sources);
  const auto validation_claims = encode_all<T>(validation, words, claim_vocab, shell.article_sources);

  EpochCallback<T> callback;
  if (on_epoch) {
    callback = [&on_epoch](const EpochRecord& record, const ModelParams<T>& params) {
      if constexpr (std::is_same_v<T, double>) {
        return on_epoch(record, params);
      } else {
        return on_epoch(record, params.template cast<double>());
      }
    };
  }
  (void)options;
  auto result = fit<T>(init.cast<T>(), hyper, train_claims, validation_claims, config, callback);

  TrainedModel trained;
  trained.model = shell;
  trained.model.params = result.params.template cast<double>();
  trained.history = std::move(result.history);
  trained.best_epoch = result.best_epoch;
  return trained;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ContractError("adam epsilon must be > 0");
  if (!(l2_lambda >= 0.0)) throw ContractError("l2_lambda must be >= 0");
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  if (max_epochs == 0) throw ContractError("max_epochs must be >= 1");
  if (!(probability_clamp > 0.0 && probability_clamp < 0.5)) {
    throw ContractError("probability_clamp must lie in (0, 0.5)");
  }
}

template <typename T>
OptimizerState<T> make_optimizer_state(std::span<Matrix<T>* const> params) {
  OptimizerState<T> state;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->rows(), p->cols());
    state.second_moment.emplace_back(p->rows(), p->cols());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Matrix<T>* const> params, const numeric::Gradients<T>& grads,
               OptimizerState<T>& state, const TrainConfig& config) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) + " parameters, given " +
                        std::to_string(params.size()));
  }
  for (const auto& [id, g] : grads) {
    if (id.value >= params.size()) throw ContractError("adam_step: gradient for unknown parameter");
    if (!g.same_shape(*params[id.value])) {
      throw ContractError("adam_step: gradient " + g.shape() + " for parameter " +
                          params[id.value]->shape());
    }
  }
  ++state.timestep;
  const double t = static_cast<double>(state.timestep);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (!m.same_shape(p) || !v.same_shape(p)) throw ContractError("adam_step: state shape mismatch");
    const auto it = grads.find(numeric::ParamId{i});
    const Matrix<T>* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T gk = g ? (*g)[k] : T{0};
      m[k] = b1 * m[k] + (T{1} - b1) * gk;
      v[k] = b2 * v[k] + (T{1} - b2) * gk * gk;
      if (m[k] == T{0}) continue;  // keeps zero-gradient parameters bit-identical
      const T m_hat = m[k] / correction1;
      const T v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
Var prediction_loss(Tape<T>& tape, Var output, Head head, double target, double clamp) {
  switch (head) {
    case Head::binary:
      if (target != 0.0 && target != 1.0) {
        throw ContractError("binary loss: target " + std::to_string(target) + " not in {0, 1}");
      }
      return tape.binary_cross_entropy(output, static_cast<T>(target), static_cast<T>(clamp));
    case Head::categorical: {
      const auto classes = tape.value(output).size();
      if (!(target >= 0.0) || target != std::floor(target) ||
          target >= static_cast<double>(classes)) {
        throw ContractError("categorical loss: target " + std::to_string(target) +
                            " is not a class index below " + std::to_string(classes));
      }
      return tape.cross_entropy(output, static_cast<std::size_t>(target), static_cast<T>(clamp));
    }
    case Head::regression:
      if (!std::isfinite(target)) throw ContractError("regression loss: target is not finite");
      return tape.squared_error(output, static_cast<T>(target));
  }
  throw ContractError("unknown head");
}

template <typename T>
Var l2_penalty(Tape<T>& tape, const model::ParamVars& p, double lambda) {
  const std::array<Var, 3> parts = {tape.sum_squares(p[model::Group::fusion_w]),
                                    tape.sum_squares(p[model::Group::dense_w]),
                                    tape.sum_squares(p[model::Group::output_w])};
  return tape.scale(tape.sum(tape.stack_rows(parts)), static_cast<T>(lambda));
}

template <typename T>
std::vector<Pair> expand_pairs(std::span<const EncodedClaim<T>> claims) {
  std::vector<Pair> pairs;
  for (std::size_t c = 0; c < claims.size(); ++c) {
    for (std::size_t a = 0; a < claims[c].articles.size(); ++a) pairs.push_back({c, a});
  }
  return pairs;
}

bool lower_is_better(Head head) { return head == Head::regression; }

double selection_metric(const metrics::MetricReport& report) {
  switch (report.kind) {
    case metrics::ReportKind::binary: return report.auc ? *report.auc : *report.macro_accuracy;
    case metrics::ReportKind::categorical: return *report.macro_accuracy;
    case metrics::ReportKind::regression: return *report.mse;
  }
  return 0.0;
}

template <typename T>
metrics::MetricReport evaluate(const ModelParams<T>& params, const Hyperparams& hyper,
                               std::span<const EncodedClaim<T>> claims,
                               const corpus::LabelScheme& labels) {
  if (claims.empty()) throw DegenerateInputError("evaluate: no claims");
  std::vector<double> scores;
  std::vector<std::vector<double>> distributions;
  std::vector<int> binary;
  std::vector<std::size_t> classes;
  std::vector<double> targets;
  for (const auto& claim : claims) {
    const double label = require_label(claim.label, claim.id);
    auto prediction = model::predict_claim(params, hyper, claim);
    switch (hyper.head) {
      case Head::binary:
        scores.push_back(prediction.credibility.at(0));
        binary.push_back(label >= 0.5 ? 1 : 0);
        break;
      case Head::categorical:
        distributions.push_back(std::move(prediction.credibility));
        classes.push_back(static_cast<std::size_t>(label));
        break;
      case Head::regression:
        scores.push_back(prediction.credibility.at(0));
        targets.push_back(label);
        break;
    }
  }
  switch (hyper.head) {
    case Head::binary: return metrics::classification_report(scores, binary);
    case Head::categorical: return metrics::categorical_report(distributions, classes, labels.class_names);
    case Head::regression: return metrics::regression_report(scores, targets);
  }
  throw ContractError("unknown head");
}

template <typename T>
FitResult<T> fit(ModelParams<T> params, const Hyperparams& hyper,
                 std::span<const EncodedClaim<T>> train,
                 std::span<const EncodedClaim<T>> validation, const TrainConfig& config,
                 const EpochCallback<T>& on_epoch) {
  config.validate();
  hyper.validate();
  params.check_shapes(hyper);
  if (train.empty()) throw DegenerateInputError("fit: empty training set");
  for (const auto& claim : train) require_label(claim.label, claim.id);

  auto pairs = expand_pairs(train);
  numeric::Rng shuffle_rng(numeric::derive_seed(config.seed, 1));
  numeric::Rng dropout_rng(numeric::derive_seed(config.seed, 2));
  const model::DropoutSampler sampler{&dropout_rng, hyper.dropout};
  const model::DropoutSampler* dropout = hyper.dropout > 0.0 ? &sampler : nullptr;
  const auto labels = scheme_for(hyper);

  auto groups = params.groups();
  const std::span<Matrix<T>* const> group_span(groups);
  auto state = make_optimizer_state<T>(group_span);

  FitResult<T> result;
  result.params = params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), shuffle_rng);
    double loss_total = 0.0;
    for (std::size_t begin = 0; begin < pairs.size(); begin += config.batch_size) {
      const std::size_t end = std::min(pairs.size(), begin + config.batch_size);
      Tape<T> tape;
      const auto p = model::bind(tape, params);
      std::vector<Var> losses;
      losses.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& claim = train[pairs[i].claim];
        const auto vars =
            model::forward_article(tape, p, hyper, claim, claim.articles[pairs[i].article], dropout);
        losses.push_back(
            prediction_loss(tape, vars.score.output, hyper.head, *claim.label, config.probability_clamp));
      }
      const T inv = T{1} / static_cast<T>(losses.size());
      Var total = tape.scale(tape.sum(tape.stack_rows(losses)), inv);
      if (config.l2_lambda > 0.0) total = tape.add(total, l2_penalty(tape, p, config.l2_lambda));
      const double value = static_cast<double>(tape.scalar(total));
      if (!std::isfinite(value)) {
        throw DegenerateInputError("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      const auto grads = tape.backward(total);
      adam_step(group_span, grads, state, config);
      loss_total += value * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_total / static_cast<double>(pairs.size());
    if (!validation.empty()) {
      const double metric = selection_metric(evaluate(params, hyper, validation, labels));
      record.validation_metric = metric;
      if (!result.best_metric || better(metric, *result.best_metric, hyper.head)) {
        record.improved = true;
        result.best_metric = metric;
        result.best_epoch = epoch;
        result.params = params;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      record.improved = true;
      result.best_epoch = epoch;
    }
    result.history.push_back(record);
    const bool stop = on_epoch && on_epoch(record, params);
    if (stop || (!validation.empty() && since_best >= config.patience)) break;
  }
  if (validation.empty()) result.params = std::move(params);
  return result;
}

TrainedModel train_model(std::span<const corpus::ClaimInstance> train,
                         std::span<const corpus::ClaimInstance> validation,
                         const Hyperparams& hyper, const TrainConfig& config,
                         const embeddings::WordEmbeddings& words, const DatasetOptions& options,
                         const EpochCallback<double>& on_epoch) {
  hyper.validate();
  config.validate();
  if (train.empty()) throw DegenerateInputError("train: empty training split");
  if (words.dim() != hyper.word_dim) {
    throw ShapeError("word vectors have dimension " + std::to_string(words.dim()) +
                     ", hyperparameters expect " + std::to_string(hyper.word_dim));
  }
  if (options.labels.classes() != hyper.output_size() && hyper.head == Head::categorical) {
    throw ContractError("label scheme has " + std::to_string(options.labels.classes()) +
                        " classes, model head has " + std::to_string(hyper.classes));
  }

  const auto counts = corpus::count_sources(train);
  model::Model shell;
  shell.hyper = hyper;
  shell.labels = options.labels;
  shell.vocabulary_fingerprint = words.fingerprint();
  shell.precision = config.precision;

  Matrix<double> claim_table;
  if (hyper.uses_claim_source()) {
    auto table = embeddings::build_source_table(counts.claim_sources, options.claim_min_support,
                                                hyper.claim_source_dim,
                                                numeric::derive_seed(config.seed, 4));
    shell.claim_sources = std::move(table.vocabulary);
    claim_table = std::move(table.vectors);
  }
  auto article_table = embeddings::build_source_table(
      counts.article_sources, options.article_min_support, hyper.article_source_dim,
      numeric::derive_seed(config.seed, 5));
  shell.article_sources = std::move(article_table.vocabulary);
  const auto init =
      model::init_params(hyper, numeric::derive_seed(config.seed, 3), claim_table, article_table.vectors);

  if (config.precision == Precision::f32) {
    return run_training<float>(train, validation, hyper, config, words, options, shell, init, on_epoch);
  }
  return run_training<double>(train, validation, hyper, config, words, options, shell, init, on_epoch);
}

metrics::MetricReport evaluate(const model::Model& model,
                               std::span<const corpus::ClaimInstance> claims,
                               const embeddings::WordEmbeddings& words) {
  std::vector<EncodedClaim<double>> encoded;
  encoded.reserve(claims.size());
  for (const auto& claim : claims) encoded.push_back(model::encode(model, claim, words));
  return evaluate<double>(model.params, model.hyper, encoded, model.labels);
}

std::vector<FoldResult> train(std::span<const corpus::ClaimInstance> instances,
                              const corpus::FoldPlan& plan, const Hyperparams& hyper,
                              const TrainConfig& config, const embeddings::WordEmbeddings& words,
                              const DatasetOptions& options, const FoldLogger& log) {
  std::map<std::string, const corpus::ClaimInstance*, std::less<>> by_id;
  for (const auto& instance : instances) by_id.emplace(instance.id, &instance);
  auto lookup = [&by_id](const std::string& id) -> const corpus::ClaimInstance& {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("fold plan names unknown claim '" + id + "'");
    return *it->second;
  };

  std::vector<corpus::ClaimInstance> validation;
  for (const auto& id : plan.validation) validation.push_back(lookup(id));

  auto run_fold = [&](std::size_t fold) {
    std::vector<corpus::ClaimInstance> train_split;
    std::vector<corpus::ClaimInstance> test_split;
    for (std::size_t f = 0; f < plan.fold_count(); ++f) {
      for (const auto& id : plan.folds[f]) (f == fold ? test_split : train_split).push_back(lookup(id));
    }
    if (train_split.empty() || test_split.empty()) {
      throw DegenerateInputError("fold " + std::to_string(fold) + " has an empty split");
    }
    TrainConfig fold_config = config;
    fold_config.seed = numeric::derive_seed(config.seed, 100 + fold);
    EpochCallback<double> on_epoch;
    if (log) {
      on_epoch = [&log, fold](const EpochRecord& record, const ModelParams<double>&) {
        log(fold, record);
        return false;
      };
    }
    FoldResult result;
    result.fold = fold;
    result.trained = train_model(train_split, validation, hyper, fold_config, words, options, on_epoch);
    result.test = evaluate(result.trained.model, test_split, words);
    result.validation = evaluate(result.trained.model, validation, words);
    return result;
  };

  const std::size_t folds = plan.fold_count();
  if (folds == 0) throw DegenerateInputError("train: fold plan has no folds");
  std::vector<FoldResult> results(folds);
  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  for (std::size_t start = 0; start < folds; start += jobs) {
    std::vector<std::future<FoldResult>> running;
    for (std::size_t f = start; f < std::min(folds, start + jobs); ++f) {
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_fold, f));
    }
    for (std::size_t i = 0; i < running.size(); ++i) results[start + i] = running[i].get();
  }
  return results;
}

TinyProblem tiny_problem(std::uint64_t seed, Head head) {
  TinyProblem problem;
  auto& h = problem.hyper;
  h.word_dim = 4;
  h.claim_source_dim = 2;
  h.article_source_dim = 2;
  h.lstm_hidden = 3;
  h.dense_size = 3;
  h.dropout = 0.0;
  h.head = head;
  h.classes = head == Head::categorical ? 3 : 2;

  numeric::Rng rng(seed);
  problem.params = model::init_params(h, seed, numeric::uniform_matrix(3, 2, 0.5, rng),
                                      numeric::uniform_matrix(3, 2, 0.5, rng));
  // Perturb everything (biases included) so every path carries gradient, and
  // keep the fused ReLU units active so the check is not vacuous.
  for (auto* group : problem.params.groups()) {
    for (auto& x : group->data()) x += numeric::uniform_matrix(1, 1, 0.3, rng)[0];
  }
  for (auto* bias : {&problem.params.fusion_b, &problem.params.dense_b}) {
    for (auto& x : bias->data()) x = 1.0 + std::abs(x);
  }

  auto& claim = problem.claim;
  claim.id = "tiny";
  claim.claim_mean = numeric::normal_matrix(1, 4, 1.0, rng);
  claim.source_row = 1;
  model::EncodedArticle<double> article;
  article.tokens = numeric::normal_matrix(2, 4, 1.0, rng);
  article.source_row = 2;
  claim.articles.push_back(std::move(article));
  claim.label = head == Head::binary ? 1.0 : head == Head::categorical ? 2.0 : 0.7;
  return problem;
}

GradCheckReport gradient_check(const TinyProblem& problem, const GradCheckOptions& options) {
  const auto& hyper = problem.hyper;
  problem.params.check_shapes(hyper);
  const auto& claim = problem.claim;
  const auto& article = claim.articles.at(0);

  auto build = [&](Tape<double>& tape, const ModelParams<double>& params) {
    const auto p = model::bind(tape, params);
    const auto vars = model::forward_article(tape, p, hyper, claim, article);
    Var loss = prediction_loss(tape, vars.score.output, hyper.head, *claim.label);
    if (options.l2_lambda > 0.0) loss = tape.add(loss, l2_penalty(tape, p, options.l2_lambda));
    return loss;
  };
  auto loss_at = [&](const ModelParams<double>& params) {
    Tape<double> tape;
    const Var loss = build(tape, params);
    return tape.scalar(loss);
  };

  Tape<double> tape;
  const Var loss = build(tape, problem.params);
  auto grads = tape.backward(loss);
  if (options.tamper) options.tamper(grads);

  GradCheckReport report;
  report.group_error.assign(model::kGroupCount, 0.0);
  report.group_gradient.assign(model::kGroupCount, 0.0);
  numeric::Rng rng(options.seed);
  ModelParams<double> probe = problem.params;
  auto groups = probe.groups();
  for (std::size_t g = 0; g < model::kGroupCount; ++g) {
    auto& m = *groups[g];
    if (m.empty()) continue;
    const auto it = grads.find(numeric::ParamId{g});
    std::uniform_int_distribution<std::size_t> pick_col(0, m.cols() - 1);
    std::uniform_int_distribution<std::size_t> pick_row(0, m.rows() - 1);
    for (std::size_t n = 0; n < options.probes_per_group; ++n) {
      std::size_t row = pick_row(rng);
      if (g == static_cast<std::size_t>(model::Group::claim_sources)) row = claim.source_row.value_or(0);
      if (g == static_cast<std::size_t>(model::Group::article_sources)) row = article.source_row;
      const std::size_t k = row * m.cols() + pick_col(rng);
      const double original = m[k];
      m[k] = original + options.step;
      const double up = loss_at(probe);
      m[k] = original - options.step;
      const double down = loss_at(probe);
      m[k] = original;
      const double numeric_grad = (up - down) / (2.0 * options.step);
      const double analytic = it == grads.end() ? 0.0 : it->second[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric_grad), options.floor});
      const double rel = std::abs(analytic - numeric_grad) / denom;
      report.group_error[g] = std::max(report.group_error[g], rel);
      report.group_gradient[g] = std::max(report.group_gradient[g], std::abs(numeric_grad));
      report.max_relative_error = std::max(report.max_relative_error, rel);
      ++report.probes;
    }
  }
  return report;
}

#define DECLARE_INSTANTIATE(T)                                                                    \
  template OptimizerState<T> make_optimizer_state(std::span<Matrix<T>* const>);                   \
  template void adam_step(std::span<Matrix<T>* const>, const numeric::Gradients<T>&,              \
                          OptimizerState<T>&, const TrainConfig&);                                \
  template Var prediction_loss(Tape<T>&, Var, Head, double, double);                              \
  template Var l2_penalty(Tape<T>&, const model::ParamVars&, double);                             \
  template std::vector<Pair> expand_pairs(std::span<const EncodedClaim<T>>);                      \
  template metrics::MetricReport evaluate(const ModelParams<T>&, const Hyperparams&,              \
                                          std::span<const EncodedClaim<T>>,                       \
                                          const corpus::LabelScheme&);                            \
  template FitResult<T> fit(ModelParams<T>, const Hyperparams&, std::span<const EncodedClaim<T>>, \
                            std::span<const EncodedClaim<T>>, const TrainConfig&,                 \
                            const EpochCallback<T>&);

DECLARE_INSTANTIATE(float)
DECLARE_INSTANTIATE(double)

#undef DECLARE_INSTANTIATE

}  // namespace declare::training
