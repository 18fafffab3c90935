#pragma once

// Classification metrics (accuracy, macro-F1, ordinal MAE) computed from an
// integer confusion matrix, plus the early-stopping rule. All averages divide
// integer counts, so two implementations that share the algebraic form agree
// bit for bit.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/common.hpp"

namespace debias {

struct MetricsReport {
  std::size_t n = 0;
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
  double accuracy = 0.0;   // percentage
  double macro_f1 = 0.0;   // percentage, averaged over all n_classes classes
  double mae = 0.0;        // mean absolute ordinal difference
  struct ClassStats {
    double precision = 0.0;  // percentage
    double recall = 0.0;     // percentage
    double f1 = 0.0;         // percentage
  };
  std::vector<ClassStats> per_class;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["n_classes"] = n_classes;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    j["mae"] = mae;
    j["confusion"] = confusion;
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& c : per_class)
      pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}});
    j["per_class"] = pc;
    return j;
  }
};

// Confusion-matrix metrics over classes 0..n_classes-1.
// Conventions: per-class F1 = 200*tp / (2*tp + fp + fn), with 0/0 -> 0; the
// macro average always divides by n_classes, even for classes never seen.
inline MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds,
                                     std::size_t n_classes) {
  if (labels.size() != preds.size())
    throw ValidationError("compute_metrics: " + std::to_string(labels.size()) + " labels vs " +
                          std::to_string(preds.size()) + " predictions");
  if (labels.empty()) throw ValidationError("compute_metrics: empty input");
  if (n_classes < 2) throw ValidationError("compute_metrics: need at least 2 classes");

  MetricsReport r;
  r.n = labels.size();
  r.n_classes = n_classes;
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  std::size_t abs_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = preds[i];
    if (y < 0 || p < 0 || static_cast<std::size_t>(y) >= n_classes || static_cast<std::size_t>(p) >= n_classes)
      throw ValidationError("compute_metrics: class index out of range at position " + std::to_string(i));
    ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
    if (y == p) ++correct;
    abs_sum += static_cast<std::size_t>(y > p ? y - p : p - y);
  }
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n);
  r.mae = static_cast<double>(abs_sum) / static_cast<double>(r.n);

  double f1_total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      if (k == c) continue;
      fp += r.confusion[k][c];
      fn += r.confusion[c][k];
    }
    MetricsReport::ClassStats s;
    s.precision = (tp + fp) ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = (tp + fn) ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const std::size_t denom = 2 * tp + fp + fn;
    s.f1 = denom ? 200.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    f1_total += s.f1;
    r.per_class.push_back(s);
  }
  r.macro_f1 = f1_total / static_cast<double>(n_classes);
  return r;
}

namespace detail {
inline void require_ordinal3(const std::vector<int>& v, const char* who) {
  for (int x : v)
    if (x < 0 || x > 2) throw ValidationError(std::string(who) + ": values must lie in {0, 1, 2}");
}
}  // namespace detail

// Eq.-4 mean absolute error over ordinal 3-class labels.
inline double mae(const std::vector<int>& labels, const std::vector<int>& preds) {
  if (labels.size() != preds.size())
    throw ValidationError("mae: " + std::to_string(labels.size()) + " labels vs " +
                          std::to_string(preds.size()) + " predictions");
  if (labels.empty()) throw ValidationError("mae: empty input");
  detail::require_ordinal3(labels, "mae");
  detail::require_ordinal3(preds, "mae");
  return compute_metrics(labels, preds, 3).mae;
}

// Macro-F1 percentage over the three ideology classes.
inline double macro_f1(const std::vector<int>& labels, const std::vector<int>& preds) {
  detail::require_ordinal3(labels, "macro_f1");
  detail::require_ordinal3(preds, "macro_f1");
  return compute_metrics(labels, preds, 3).macro_f1;
}

// Accuracy percentage.
inline double accuracy(const std::vector<int>& labels, const std::vector<int>& preds) {
  detail::require_ordinal3(labels, "accuracy");
  detail::require_ordinal3(preds, "accuracy");
  return compute_metrics(labels, preds, 3).accuracy;
}

// ---------------------------------------------------------------------------
// Early stopping on validation macro-F1. Ties are not improvements; the best
// epoch is the earliest one attaining the maximum (1-indexed).

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;  // 1-indexed
};

inline EarlyStopDecision early_stopping_check(const std::vector<double>& history, std::size_t patience) {
  if (history.empty()) throw ValidationError("early_stopping_check: empty history");
  if (patience < 1) throw ValidationError("early_stopping_check: patience must be >= 1");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i] > history[best]) best = i;  // strict: ties keep the earlier epoch
  EarlyStopDecision d;
  d.best_epoch = best + 1;
  d.stop = (history.size() - 1 - best) >= patience;
  return d;
}

}  // namespace debias
