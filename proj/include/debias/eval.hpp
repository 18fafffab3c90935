#pragma once

// Split-level evaluation over trained parameters, the source-prediction probe
// (how well can a model recover the publishing medium from text alone), and
// the regime-comparison text table.

#include <map>
#include <string>
#include <vector>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/metrics.hpp"
#include "debias/model.hpp"
#include "debias/splits.hpp"

namespace debias {

// Stable identity for a split, so reports can say exactly which assignment
// they were computed against.
inline std::string split_fingerprint(const SplitAssignment& split) {
  return hex16(fnv1a64(split.to_json().dump()));
}

struct EvalReport {
  Subset subset = Subset::Test;
  std::string fingerprint;  // of the split evaluated against
  MetricsReport metrics;

  nlohmann::json to_json() const {
    nlohmann::json j = metrics.to_json();
    j["subset"] = to_string(subset);
    j["split_fingerprint"] = fingerprint;
    return j;
  }
};

// Predicts every article of the subset in sorted-id order and scores against
// the true ideology labels.
inline EvalReport evaluate_split(const ModelParams& params, const Corpus& corpus,
                                 const SplitAssignment& split, Subset subset,
                                 const FeatureLookup* features = nullptr) {
  const std::vector<std::string> ids = split.ids_of(subset);
  if (ids.empty())
    throw ValidationError("evaluate_split: subset " + std::string(to_string(subset)) + " is empty");
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (const std::string& id : ids) labels.push_back(ordinal(corpus.article(id).label));
  EvalReport report;
  report.subset = subset;
  report.fingerprint = split_fingerprint(split);
  report.metrics = compute_metrics(labels, predict_labels(params, corpus, ids, features), kNumClasses);
  return report;
}

// ---------------------------------------------------------------------------
// Source-prediction probe.

// Stratified-by-medium random split: every medium contributes at least one
// article to each of train/valid/test, so all media classes appear everywhere.
inline SplitAssignment probe_split(const Corpus& corpus, std::uint64_t seed) {
  SplitAssignment s;
  s.kind = SplitKind::Random;
  s.seed = seed;
  Rng rng(Rng::derive(seed, "probe-split"));
  std::map<std::string, std::vector<std::string>> by_medium;
  for (const Article& a : corpus.articles) by_medium[a.medium_id].push_back(a.id);
  for (auto& [medium, ids] : by_medium) {
    if (ids.size() < 3)
      throw ValidationError("medium \"" + medium + "\" has only " + std::to_string(ids.size()) +
                            " articles; the probe needs at least 3 (one per set)");
    rng.shuffle(ids);
    // ~15% each to valid and test, at least one apiece; the rest trains.
    const std::size_t share = std::max<std::size_t>(1, ids.size() * 3 / 20);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Subset sub = Subset::Train;
      if (i < share) sub = Subset::Test;
      else if (i < 2 * share) sub = Subset::Valid;
      s.assignment[ids[i]] = sub;
    }
  }
  return s;
}

inline std::size_t predict_medium_index(const ModelParams& p, const Article& a) {
  Tensor h = encode_article(p, a);
  Tensor logits = linear_forward(h, p.tensor("media_head.w"), p.tensor("media_head.b"));
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.cols; ++j)
    if (logits.at(0, j) > logits.at(0, best)) best = j;
  return best;
}

struct ProbeOptions {
  Dims dims = {32, 32, 32};
  std::size_t max_tokens = 64;
  double lr = 1.0;
  double clip = 5.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
};

struct ProbeReport {
  std::size_t n_media = 0;
  std::size_t best_epoch = 0;
  MetricsReport probe;     // trained encoder + media head on the probe test set
  MetricsReport majority;  // always predict the most common training medium

  nlohmann::json to_json() const {
    return {{"n_media", n_media},
            {"best_epoch", best_epoch},
            {"probe", probe.to_json()},
            {"majority", majority.to_json()}};
  }

  std::string to_table() const {
    TextTable t;
    t.header({"probe", "Macro F1", "Acc."});
    t.row({"majority", format_fixed(majority.macro_f1, 2), format_fixed(majority.accuracy, 2)});
    t.row({"model", format_fixed(probe.macro_f1, 2), format_fixed(probe.accuracy, 2)});
    return t.to_string();
  }
};

// Trains a fresh encoder with the media head as the main objective (no
// gradient reversal anywhere) and reports how well the test-set medium can be
// recovered, next to the majority-class floor. High probe accuracy means the
// corpus leaks source identity into the text.
inline ProbeReport source_probe(const Corpus& corpus, std::uint64_t seed, ProbeOptions opts = {}) {
  const SplitAssignment split = probe_split(corpus, seed);

  TrainConfig cfg;
  cfg.dims = opts.dims;
  cfg.max_tokens = opts.max_tokens;
  cfg.lr = opts.lr;
  cfg.clip = opts.clip;
  cfg.batch_size = opts.batch_size;
  cfg.max_epochs = opts.max_epochs;
  cfg.patience = opts.patience;
  cfg.seed = seed;
  ModelParams p = init_model(corpus, split, cfg, 0);

  auto media_labels = [&](const std::vector<std::string>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const std::string& id : ids)
      out.push_back(static_cast<int>(p.media_index(corpus.article(id).medium_id)));
    return out;
  };
  auto media_preds = [&](const ModelParams& params, const std::vector<std::string>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const std::string& id : ids)
      out.push_back(static_cast<int>(predict_medium_index(params, corpus.article(id))));
    return out;
  };

  std::vector<std::string> train_ids = split.ids_of(Subset::Train);
  const std::vector<std::string> valid_ids = split.ids_of(Subset::Valid);
  const std::vector<int> valid_labels = media_labels(valid_ids);
  const std::size_t n_media = p.media_classes.size();
  if (n_media < 2) throw ValidationError("source_probe: need at least 2 media");

  Rng order_rng(Rng::derive(seed, "probe-order"));
  std::vector<double> history;
  std::map<std::string, Tensor> best_snapshot;
  double best_acc = -1.0;
  std::size_t best_epoch = 0;
  for (std::size_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    order_rng.shuffle(train_ids);
    for (std::size_t i = 0; i < train_ids.size(); i += opts.batch_size) {
      const std::size_t hi = std::min(i + opts.batch_size, train_ids.size());
      const std::vector<std::string> ids(train_ids.begin() + static_cast<std::ptrdiff_t>(i),
                                         train_ids.begin() + static_cast<std::ptrdiff_t>(hi));
      media_train_step(p, make_batch(p, corpus, ids, true), opts.lr, opts.clip);
    }
    const MetricsReport valid = compute_metrics(valid_labels, media_preds(p, valid_ids), n_media);
    history.push_back(valid.accuracy);
    if (valid.accuracy > best_acc) {
      best_acc = valid.accuracy;
      best_epoch = epoch;
      best_snapshot = detail::clone_tensors(p.tensors);
    }
    if (early_stopping_check(history, opts.patience).stop) break;
  }
  p.tensors = std::move(best_snapshot);

  const std::vector<std::string> test_ids = split.ids_of(Subset::Test);
  const std::vector<int> test_labels = media_labels(test_ids);

  ProbeReport report;
  report.n_media = n_media;
  report.best_epoch = best_epoch;
  report.probe = compute_metrics(test_labels, media_preds(p, test_ids), n_media);

  // Majority floor: the most common training medium, every time.
  std::vector<std::size_t> train_counts(n_media, 0);
  for (const int label : media_labels(train_ids)) ++train_counts[static_cast<std::size_t>(label)];
  const int majority_index = static_cast<int>(
      std::max_element(train_counts.begin(), train_counts.end()) - train_counts.begin());
  report.majority =
      compute_metrics(test_labels, std::vector<int>(test_labels.size(), majority_index), n_media);
  return report;
}

// ---------------------------------------------------------------------------
// Regime comparison table: rows = labeled runs, columns = the three headline
// metrics at two decimals.

struct RegimeRow {
  std::string name;
  MetricsReport metrics;
};

inline std::string results_table(const std::vector<RegimeRow>& rows) {
  TextTable t;
  t.header({"run", "Macro F1", "Acc.", "MAE"});
  for (const RegimeRow& r : rows)
    t.row({r.name, format_fixed(r.metrics.macro_f1, 2), format_fixed(r.metrics.accuracy, 2),
           format_fixed(r.metrics.mae, 2)});
  return t.to_string();
}

}  // namespace debias
