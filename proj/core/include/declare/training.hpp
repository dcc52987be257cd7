#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "declare/checkpoint.hpp"
#include "declare/corpus.hpp"
#include "declare/embeddings.hpp"
#include "declare/metrics.hpp"
#include "declare/model.hpp"
#include "declare/numeric/tape.hpp"

namespace declare::training {

using model::EncodedClaim;
using model::Hyperparams;
using model::ModelParams;
using model::Precision;
using numeric::Matrix;
using numeric::Tape;
using numeric::Var;

struct TrainConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2_lambda = 1e-4;       // on fusion_w, dense_w and output_w
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;      // epochs without validation improvement
  std::uint64_t seed = 42;
  Precision precision = Precision::f64;
  double probability_clamp = 1e-7;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <typename T>
struct OptimizerState {
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
  std::size_t timestep = 0;
};

template <typename T>
OptimizerState<T> make_optimizer_state(std::span<Matrix<T>* const> params);

// Bias-corrected Adam. grads[ParamId{i}] belongs to params[i]; a missing entry
// is a zero gradient.
template <typename T>
void adam_step(std::span<Matrix<T>* const> params, const numeric::Gradients<T>& grads,
               OptimizerState<T>& state, const TrainConfig& config);

// Per-instance loss for one head: clamped binary cross-entropy, categorical
// cross-entropy, or squared error. Throws ContractError for a target outside
// the head's domain.
template <typename T>
Var prediction_loss(Tape<T>& tape, Var output, model::Head head, double target,
                    double clamp = 1e-7);

// lambda * (|W_c|² + |W_d|² + |w_out|²).
template <typename T>
Var l2_penalty(Tape<T>& tape, const model::ParamVars& p, double lambda);

// One (claim, article) training instance.
struct Pair {
  std::size_t claim = 0;
  std::size_t article = 0;
  friend bool operator==(const Pair&, const Pair&) = default;
};

template <typename T>
std::vector<Pair> expand_pairs(std::span<const EncodedClaim<T>> claims);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> validation_metric;
  bool improved = false;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// Returning true stops training after the current epoch.
template <typename T>
using EpochCallback = std::function<bool(const EpochRecord&, const ModelParams<T>&)>;

template <typename T>
struct FitResult {
  ModelParams<T> params;  // best epoch (last epoch when there is no validation set)
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_metric;
};

template <typename T>
FitResult<T> fit(ModelParams<T> params, const Hyperparams& hyper,
                 std::span<const EncodedClaim<T>> train,
                 std::span<const EncodedClaim<T>> validation, const TrainConfig& config,
                 const EpochCallback<T>& on_epoch = {});

// Claim-level report over aggregated predictions.
template <typename T>
metrics::MetricReport evaluate(const ModelParams<T>& params, const Hyperparams& hyper,
                               std::span<const EncodedClaim<T>> claims,
                               const corpus::LabelScheme& labels);

// The value early stopping tracks: AUC for binary heads (macro accuracy when
// AUC is undefined), macro accuracy for categorical heads, MSE for regression.
double selection_metric(const metrics::MetricReport& report);
bool lower_is_better(model::Head head);

struct DatasetOptions {
  corpus::LabelScheme labels;
  std::size_t claim_min_support = 5;
  std::size_t article_min_support = 10;
  std::size_t jobs = 1;  // folds trained concurrently
};

struct TrainedModel {
  model::Model model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Builds source tables from the training claims, initializes, and fits.
TrainedModel train_model(std::span<const corpus::ClaimInstance> train,
                         std::span<const corpus::ClaimInstance> validation,
                         const Hyperparams& hyper, const TrainConfig& config,
                         const embeddings::WordEmbeddings& words, const DatasetOptions& options,
                         const EpochCallback<double>& on_epoch = {});

struct FoldResult {
  std::size_t fold = 0;
  TrainedModel trained;
  metrics::MetricReport test;
  metrics::MetricReport validation;
};

using FoldLogger = std::function<void(std::size_t fold, const EpochRecord&)>;

// Each fold trains on the other folds, early-stops on the plan's validation
// claims and is scored on its own fold. The logger may be called from several
// threads when jobs > 1.
std::vector<FoldResult> train(std::span<const corpus::ClaimInstance> instances,
                              const corpus::FoldPlan& plan, const Hyperparams& hyper,
                              const TrainConfig& config, const embeddings::WordEmbeddings& words,
                              const DatasetOptions& options, const FoldLogger& log = {});

metrics::MetricReport evaluate(const model::Model& model,
                               std::span<const corpus::ClaimInstance> claims,
                               const embeddings::WordEmbeddings& words);

struct GradCheckOptions {
  std::size_t probes_per_group = 6;
  double step = 1e-5;
  double floor = 1e-5;     // denominator floor for the relative error
  double l2_lambda = 1e-2;
  std::uint64_t seed = 7;
  // Applied to the analytic gradients before comparison (sabotage testing).
  std::function<void(numeric::Gradients<double>&)> tamper;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> group_error;     // per parameter group
  std::vector<double> group_gradient;  // largest |numeric gradient| probed per group
  std::size_t probes = 0;
};

struct TinyProblem {
  Hyperparams hyper;
  ModelParams<double> params;
  EncodedClaim<double> claim;
};

// d=4, H=3, F=3, source dims 2, one 2-token article, random parameters.
TinyProblem tiny_problem(std::uint64_t seed, model::Head head = model::Head::binary);

// Central differences against the tape's gradients of loss + L2 (dropout off)
// on randomly probed entries of every group; source-table probes target the
// rows the claim uses.
GradCheckReport gradient_check(const TinyProblem& problem, const GradCheckOptions& options = {});

}  // namespace declare::training
