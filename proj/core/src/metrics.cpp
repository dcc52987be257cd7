#include "declare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "declare/errors.hpp"

namespace declare::metrics {

namespace {

void require_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                        std::to_string(b) + " labels");
  }
  if (a == 0) throw ContractError(std::string(what) + ": no predictions");
}

std::string format(std::optional<double> v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

const char* kind_name(ReportKind kind) {
  switch (kind) {
    case ReportKind::binary: return "binary";
    case ReportKind::categorical: return "categorical";
    case ReportKind::regression: return "regression";
  }
  return "unknown";
}

void fill_class_stats(MetricReport& report, std::span<const std::size_t> predicted,
                      std::span<const std::size_t> actual) {
  const std::size_t k = report.class_names.size();
  report.class_support.assign(k, 0);
  std::vector<std::size_t> correct(k, 0);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ++report.class_support[actual[i]];
    if (predicted[i] == actual[i]) ++correct[actual[i]];
  }
  report.class_accuracy.assign(k, 0.0);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (report.class_support[c] == 0) continue;
    report.class_accuracy[c] =
        static_cast<double>(correct[c]) / static_cast<double>(report.class_support[c]);
    total += report.class_accuracy[c];
    ++present;
  }
  report.macro_accuracy = total / static_cast<double>(present);
  report.macro_f1 = macro_f1(predicted, actual, k);
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require_lengths(scores.size(), labels.size(), "roc_auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
                std::size_t classes) {
  require_lengths(predicted.size(), actual.size(), "macro_f1");
  if (classes == 0) throw ContractError("macro_f1: no classes");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (predicted[i] >= classes || actual[i] >= classes) {
      throw ContractError("macro_f1: class index out of range");
    }
    if (predicted[i] == actual[i]) {
      ++tp[actual[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[actual[i]];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    if (denom > 0.0) total += 2.0 * static_cast<double>(tp[c]) / denom;
  }
  return total / static_cast<double>(classes);
}

MetricReport classification_report(std::span<const double> scores, std::span<const int> labels,
                                   double threshold) {
  require_lengths(scores.size(), labels.size(), "classification_report");
  std::vector<std::size_t> predicted(scores.size());
  std::vector<std::size_t> actual(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw ContractError("classification_report: score outside [0, 1]");
    }
    predicted[i] = scores[i] >= threshold ? 1 : 0;
    actual[i] = labels[i] != 0 ? 1 : 0;
  }
  MetricReport report;
  report.kind = ReportKind::binary;
  report.count = scores.size();
  report.class_names = {"false", "true"};
  fill_class_stats(report, predicted, actual);
  report.auc = roc_auc(scores, labels);
  return report;
}

MetricReport categorical_report(std::span<const std::vector<double>> distributions,
                                std::span<const std::size_t> labels,
                                std::vector<std::string> class_names) {
  require_lengths(distributions.size(), labels.size(), "categorical_report");
  const std::size_t k = class_names.size();
  std::vector<std::size_t> predicted(labels.size());
  double squared = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& dist = distributions[i];
    if (dist.size() != k) throw ContractError("categorical_report: distribution width mismatch");
    if (labels[i] >= k) throw ContractError("categorical_report: label out of range");
    const auto best = std::max_element(dist.begin(), dist.end());
    predicted[i] = static_cast<std::size_t>(best - dist.begin());
    const double confidence = *best;
    const double target = predicted[i] == labels[i] ? 1.0 : 0.0;
    squared += (confidence - target) * (confidence - target);
  }
  MetricReport report;
  report.kind = ReportKind::categorical;
  report.count = labels.size();
  report.class_names = std::move(class_names);
  fill_class_stats(report, predicted, labels);
  report.mse = squared / static_cast<double>(labels.size());
  report.rmse = std::sqrt(*report.mse);
  return report;
}

MetricReport regression_report(std::span<const double> predictions,
                               std::span<const double> targets) {
  require_lengths(predictions.size(), targets.size(), "regression_report");
  double squared = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double diff = predictions[i] - targets[i];
    squared += diff * diff;
  }
  MetricReport report;
  report.kind = ReportKind::regression;
  report.count = predictions.size();
  report.mse = squared / static_cast<double>(predictions.size());
  report.rmse = std::sqrt(*report.mse);
  return report;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << kind_name(kind) << " report over " << count << " claims\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    os << "  " << class_names[c] << " claims accuracy: " << class_accuracy[c] * 100.0 << "% ("
       << class_support[c] << " claims)\n";
  }
  auto line = [&os](const char* name, std::optional<double> v) {
    if (!v) return;
    os << "  " << name << ": " << *v << '\n';
  };
  if (kind != ReportKind::regression) {
    line("macro F1", macro_f1);
    line("macro accuracy", macro_accuracy);
  }
  if (kind == ReportKind::binary) os << "  AUC: " << (auc ? format(auc) : "undefined") << '\n';
  line("MSE", mse);
  line("RMSE", rmse);
  return os.str();
}

std::string MetricReport::to_key_values() const {
  std::ostringstream os;
  os << "kind=" << kind_name(kind) << '\n' << "count=" << count << '\n';
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    os << "accuracy." << class_names[c] << '=' << format(class_accuracy[c]) << '\n';
    os << "support." << class_names[c] << '=' << class_support[c] << '\n';
  }
  if (kind != ReportKind::regression) {
    os << "macro_f1=" << format(macro_f1) << '\n';
    os << "macro_accuracy=" << format(macro_accuracy) << '\n';
  }
  if (kind == ReportKind::binary) os << "auc=" << format(auc) << '\n';
  if (kind != ReportKind::binary) {
    os << "mse=" << format(mse) << '\n';
    os << "rmse=" << format(rmse) << '\n';
  }
  return os.str();
}

}  // namespace declare::metrics
