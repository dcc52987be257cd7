#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace declare::metrics {

enum class ReportKind { binary, categorical, regression };

// Only the fields relevant to `kind` are populated. For binary reports class 0
// is "false" and class 1 is "true", so class_accuracy[1] is the true-claims
// accuracy.
struct MetricReport {
  ReportKind kind = ReportKind::binary;
  std::size_t count = 0;
  std::vector<std::string> class_names;
  std::vector<double> class_accuracy;
  std::vector<std::size_t> class_support;
  std::optional<double> macro_f1;
  std::optional<double> macro_accuracy;
  std::optional<double> auc;  // empty when only one class is present
  std::optional<double> mse;
  std::optional<double> rmse;

  std::string to_text() const;
  // One `key=value` per line; undefined values are written as `undefined`.
  std::string to_key_values() const;
  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Rank-based (Mann-Whitney) ROC AUC; tied scores count one half.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

// Unweighted mean of per-class F1. A class never predicted and never present
// contributes 0.
double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
                std::size_t classes);

// Claim-level binary report; a score >= threshold predicts "true".
MetricReport classification_report(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5);

// K-class report over aggregated class distributions. RMSE is computed over
// the confidence (max class probability) against correctness.
MetricReport categorical_report(std::span<const std::vector<double>> distributions,
                                std::span<const std::size_t> labels,
                                std::vector<std::string> class_names);

MetricReport regression_report(std::span<const double> predictions,
                               std::span<const double> targets);

}  // namespace declare::metrics
