#pragma once

// The encoder/heads architecture and the three training regimes: baseline
// cross-entropy, adversarial media adaptation (gradient reversal into a media
// head), and triplet-loss pre-training followed by fine-tuning. Also the
// prediction path, the training loop with early stopping, and checkpoint
// serialization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/autodiff.hpp"
#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/media_features.hpp"
#include "debias/metrics.hpp"
#include "debias/splits.hpp"
#include "debias/triplets.hpp"

namespace debias {

struct Dims {
  std::size_t d_embed = 32;
  std::size_t d_hidden = 32;
  std::size_t d_repr = 32;
};

enum class Regime { Baseline, AA, TLP };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Baseline: return "baseline";
    case Regime::AA: return "aa";
    case Regime::TLP: return "tlp";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  const std::string t = to_lower(s);
  if (t == "baseline") return Regime::Baseline;
  if (t == "aa") return Regime::AA;
  if (t == "tlp") return Regime::TLP;
  throw ValidationError("unknown regime \"" + s + "\" (expected baseline, aa, or tlp)");
}

struct TrainConfig {
  Regime regime = Regime::Baseline;
  std::optional<double> lambda;     // adversarial weight; required for AA
  double margin = 1.0;              // triplet hinge margin
  double lr = 0.1;
  double clip = 5.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 7;
  bool use_media_features = false;
  std::string feature_name;         // feature to consume when enabled
  Dims dims;
  std::size_t max_tokens = 64;
  bool normalize_repr = false;      // L2-normalize encoder output before triplet distances
  std::size_t pretrain_epochs = 5;  // TLP only
  std::size_t n_triplets = 2000;    // TLP only
  bool allow_relaxed = true;        // TLP mining fallback
};

inline void validate_config(const TrainConfig& c) {
  if (c.regime == Regime::AA && !c.lambda)
    throw ValidationError("regime aa requires lambda");
  if (c.lambda && *c.lambda < 0.0) throw ValidationError("lambda must be >= 0");
  if (c.margin < 0.0) throw ValidationError("margin must be >= 0");
  if (!(c.lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(c.clip > 0.0)) throw ValidationError("clip must be > 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (c.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (c.patience < 1) throw ValidationError("patience must be >= 1");
  if (c.dims.d_embed < 1 || c.dims.d_hidden < 1 || c.dims.d_repr < 1)
    throw ValidationError("model dimensions must be >= 1");
  if (c.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
  if (c.regime == Regime::TLP && (c.pretrain_epochs < 1 || c.n_triplets < 1))
    throw ValidationError("regime tlp requires pretrain_epochs >= 1 and n_triplets >= 1");
  if (c.regime == Regime::AA && c.use_media_features)
    throw ValidationError("media features apply to baseline or tlp fine-tuning, not adversarial training");
}

// Medium id -> feature vector, as consumed by the label head.
using FeatureLookup = std::map<std::string, std::vector<double>>;

inline FeatureLookup feature_lookup(const MediaVectorMap& m) {
  FeatureLookup out;
  for (const auto& [id, mv] : m) out.emplace(id, mv.vector);
  return out;
}

// ---------------------------------------------------------------------------
// Parameters. Tensors live here as untracked storage; each training step binds
// them to a fresh tape so updates mutate this storage in place.

struct ModelParams {
  Dims dims;
  std::size_t max_tokens = 64;
  std::map<std::string, std::size_t> vocab;  // token -> embedding row; row 0 is UNK
  std::vector<std::string> media_classes;    // training media, sorted
  std::size_t media_feature_width = 0;       // extra label-head input width; 0 = off
  std::string feature_name;
  bool normalize_repr = false;
  std::map<std::string, Tensor> tensors;

  std::size_t vocab_size() const { return vocab.size() + 1; }

  const Tensor& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("unknown parameter tensor \"" + name + "\"");
    return it->second;
  }

  // Training media are a closed world: articles from other media cannot be
  // targets for the media head.
  std::size_t media_index(const std::string& medium_id) const {
    auto it = std::lower_bound(media_classes.begin(), media_classes.end(), medium_id);
    if (it == media_classes.end() || *it != medium_id)
      throw ValidationError("unknown medium \"" + medium_id + "\" at training time");
    return static_cast<std::size_t>(it - media_classes.begin());
  }
};

// Fixed construction order, independent of regime and feature width: the
// encoder consumes the only random draws, so its initialization is identical
// across Baseline/AA/TLP for a given seed. Heads start at zero (a zero linear
// head on top of a live encoder trains fine and predicts uniform before the
// first step).
inline ModelParams init_model(const Corpus& corpus, const SplitAssignment& split,
                              const TrainConfig& cfg, std::size_t media_feature_width = 0) {
  const std::vector<std::string> train_ids = split.ids_of(Subset::Train);
  if (train_ids.empty()) throw ValidationError("init_model: split has an empty train set");

  ModelParams p;
  p.dims = cfg.dims;
  p.max_tokens = cfg.max_tokens;
  p.media_feature_width = media_feature_width;
  p.feature_name = cfg.feature_name;
  p.normalize_repr = cfg.normalize_repr;

  std::set<std::string> tokens, media;
  for (const std::string& id : train_ids) {
    const Article& a = corpus.article(id);
    media.insert(a.medium_id);
    for (const std::string& tok : tokenize(a.title + " " + a.body, cfg.max_tokens)) tokens.insert(tok);
  }
  std::size_t next_id = 1;  // 0 is reserved for UNK
  for (const std::string& tok : tokens) p.vocab.emplace(tok, next_id++);
  p.media_classes.assign(media.begin(), media.end());

  Rng rng(Rng::derive(cfg.seed, "init"));
  auto gaussian = [&rng](std::size_t rows, std::size_t cols, double scale) {
    std::vector<double> vals(rows * cols);
    for (double& v : vals) v = rng.normal() * scale;
    return constant(rows, cols, std::move(vals));
  };
  const Dims& d = p.dims;
  // Unit-scale embeddings: mean pooling over max_tokens already divides the
  // signal by the sequence length, so anything smaller starves the zero-started
  // heads of gradient.
  p.tensors.emplace("encoder.embed", gaussian(p.vocab_size(), d.d_embed, 1.0));
  p.tensors.emplace("encoder.w1", gaussian(d.d_embed, d.d_hidden, 1.0 / std::sqrt(static_cast<double>(d.d_embed))));
  p.tensors.emplace("encoder.b1", zeros(1, d.d_hidden));
  p.tensors.emplace("encoder.w2", gaussian(d.d_hidden, d.d_repr, 1.0 / std::sqrt(static_cast<double>(d.d_hidden))));
  p.tensors.emplace("encoder.b2", zeros(1, d.d_repr));
  p.tensors.emplace("label_head.w", zeros(d.d_repr + media_feature_width, kNumClasses));
  p.tensors.emplace("label_head.b", zeros(1, kNumClasses));
  p.tensors.emplace("media_head.w", zeros(d.d_repr, p.media_classes.size()));
  p.tensors.emplace("media_head.b", zeros(1, p.media_classes.size()));
  return p;
}

// ---------------------------------------------------------------------------
// Encoding.

inline std::vector<std::size_t> article_token_ids(const ModelParams& p, const Article& a) {
  std::vector<std::size_t> ids;
  for (const std::string& tok : tokenize(a.title + " " + a.body, p.max_tokens)) {
    auto it = p.vocab.find(tok);
    if (it != p.vocab.end()) ids.push_back(it->second);
  }
  if (ids.empty()) ids.push_back(0);  // zero in-vocabulary tokens -> the UNK row
  return ids;
}

// Forward over an explicit tensor map: pass tape-bound tensors while training,
// or params.tensors directly for tape-free inference.
inline Tensor encode_rows(const ModelParams& p, const std::map<std::string, Tensor>& t,
                          const std::vector<const Article*>& articles) {
  if (articles.empty()) throw ValidationError("encode_rows: empty batch");
  std::vector<Tensor> pooled;
  pooled.reserve(articles.size());
  for (const Article* a : articles) pooled.push_back(embedding_mean(article_token_ids(p, *a), t.at("encoder.embed")));
  Tensor x = stack_rows(pooled);
  Tensor h1 = tanh_act(linear_forward(x, t.at("encoder.w1"), t.at("encoder.b1")));
  return tanh_act(linear_forward(h1, t.at("encoder.w2"), t.at("encoder.b2")));
}

inline Tensor encode_article(const ModelParams& p, const Article& a) {
  return encode_rows(p, p.tensors, {&a});
}

inline std::map<std::string, Tensor> bind_params(ModelParams& p, Tape& tape) {
  std::map<std::string, Tensor> out;
  for (auto& [name, t] : p.tensors) out.emplace(name, tape.var(t.rows, t.cols, t.data));
  return out;
}

namespace detail {

inline std::vector<NamedParam> param_group(const std::map<std::string, Tensor>& bound,
                                           std::initializer_list<const char*> prefixes) {
  std::vector<NamedParam> out;
  for (const auto& [name, t] : bound)
    for (const char* prefix : prefixes)
      if (name.rfind(prefix, 0) == 0) {
        out.push_back({name, t});
        break;
      }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training steps. Each builds a fresh tape over the shared parameter storage
// and applies one clipped SGD update per parameter group.

struct LabeledExample {
  const Article* article = nullptr;
  std::size_t label = 0;         // ordinal class
  std::size_t medium_index = 0;  // media-head target; only set when needed
};

inline std::vector<LabeledExample> make_batch(const ModelParams& p, const Corpus& corpus,
                                              const std::vector<std::string>& ids, bool need_media_index) {
  std::vector<LabeledExample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const Article& a = corpus.article(id);
    LabeledExample ex;
    ex.article = &a;
    ex.label = ordinal(a.label);
    ex.medium_index = need_media_index ? p.media_index(a.medium_id) : 0;
    out.push_back(ex);
  }
  return out;
}

struct LossReport {
  double label_loss = 0.0;
  double media_loss = 0.0;
  double triplet_loss = 0.0;
  double grad_norm = 0.0;  // pre-clip norm of the encoder-bearing group
};

namespace detail {

inline std::vector<const Article*> article_ptrs(const std::vector<LabeledExample>& batch) {
  std::vector<const Article*> out;
  out.reserve(batch.size());
  for (const LabeledExample& ex : batch) out.push_back(ex.article);
  return out;
}

// Constant [n, width] tensor of per-article media vectors, with errors naming
// the medium whose vector is missing or mis-sized.
inline Tensor media_feature_rows(const ModelParams& p, const FeatureLookup& features,
                                 const std::vector<const Article*>& articles) {
  std::vector<double> vals;
  vals.reserve(articles.size() * p.media_feature_width);
  for (const Article* a : articles) {
    auto it = features.find(a->medium_id);
    if (it == features.end())
      throw ValidationError("no media vector for medium \"" + a->medium_id + "\"");
    if (it->second.size() != p.media_feature_width)
      throw ValidationError("media vector for medium \"" + a->medium_id + "\" has width " +
                            std::to_string(it->second.size()) + ", expected " +
                            std::to_string(p.media_feature_width));
    vals.insert(vals.end(), it->second.begin(), it->second.end());
  }
  return constant(articles.size(), p.media_feature_width, std::move(vals));
}

}  // namespace detail

// Joint step: label cross-entropy plus media cross-entropy behind a gradient
// reversal, so the encoder is pushed away from media-predictive features while
// the media head itself keeps learning. Two clip groups: encoder + label head,
// and the media head on its own (the reversal already scales the encoder
// coupling, and a shared norm would let media-head gradients perturb the
// lambda = 0 equivalence with plain baseline steps).
inline LossReport aa_train_step(ModelParams& p, const std::vector<LabeledExample>& batch,
                                double lambda, double lr, double clip) {
  if (batch.empty()) throw ValidationError("aa_train_step: empty batch");
  if (p.media_feature_width != 0)
    throw ValidationError("aa_train_step: model consumes media features; adversarial training does not");
  Tape tape;
  auto bound = bind_params(p, tape);
  Tensor h = encode_rows(p, bound, detail::article_ptrs(batch));

  std::vector<std::size_t> label_targets, media_targets;
  for (const LabeledExample& ex : batch) {
    label_targets.push_back(ex.label);
    media_targets.push_back(ex.medium_index);
  }
  Tensor label_logits = linear_forward(h, bound.at("label_head.w"), bound.at("label_head.b"));
  Tensor loss_y = softmax_cross_entropy(label_logits, label_targets);

  Tensor reversed = gradient_reversal(h, lambda);
  Tensor media_logits = linear_forward(reversed, bound.at("media_head.w"), bound.at("media_head.b"));
  Tensor loss_m = softmax_cross_entropy(media_logits, media_targets);

  Gradients grads = backward(add(loss_y, loss_m));
  LossReport rep;
  rep.label_loss = loss_y.scalar();
  rep.media_loss = loss_m.scalar();
  rep.grad_norm = sgd_step(detail::param_group(bound, {"encoder.", "label_head."}), grads, lr, clip);
  sgd_step(detail::param_group(bound, {"media_head."}), grads, lr, clip);
  return rep;
}

// Plain label cross-entropy; with media features enabled the label head reads
// concat(encoder output, medium vector). Updates encoder and label head.
inline LossReport finetune_step(ModelParams& p, const std::vector<LabeledExample>& batch,
                                const FeatureLookup* features, double lr, double clip) {
  if (batch.empty()) throw ValidationError("finetune_step: empty batch");
  Tape tape;
  auto bound = bind_params(p, tape);
  const auto articles = detail::article_ptrs(batch);
  Tensor h = encode_rows(p, bound, articles);
  Tensor x = h;
  if (p.media_feature_width > 0) {
    if (!features) throw ValidationError("finetune_step: model consumes media features but none were supplied");
    x = concat_cols(h, detail::media_feature_rows(p, *features, articles));
  }
  std::vector<std::size_t> label_targets;
  for (const LabeledExample& ex : batch) label_targets.push_back(ex.label);
  Tensor loss_y = softmax_cross_entropy(linear_forward(x, bound.at("label_head.w"), bound.at("label_head.b")),
                                        label_targets);
  Gradients grads = backward(loss_y);
  LossReport rep;
  rep.label_loss = loss_y.scalar();
  rep.grad_norm = sgd_step(detail::param_group(bound, {"encoder.", "label_head."}), grads, lr, clip);
  return rep;
}

// Media classification as the main objective (no reversal): the probe's
// training step. Updates encoder and media head.
inline LossReport media_train_step(ModelParams& p, const std::vector<LabeledExample>& batch,
                                   double lr, double clip) {
  if (batch.empty()) throw ValidationError("media_train_step: empty batch");
  Tape tape;
  auto bound = bind_params(p, tape);
  Tensor h = encode_rows(p, bound, detail::article_ptrs(batch));
  std::vector<std::size_t> media_targets;
  for (const LabeledExample& ex : batch) media_targets.push_back(ex.medium_index);
  Tensor loss_m = softmax_cross_entropy(linear_forward(h, bound.at("media_head.w"), bound.at("media_head.b")),
                                        media_targets);
  Gradients grads = backward(loss_m);
  LossReport rep;
  rep.media_loss = loss_m.scalar();
  rep.grad_norm = sgd_step(detail::param_group(bound, {"encoder.", "media_head."}), grads, lr, clip);
  return rep;
}

// Mean hinge max(D(a,p) - D(a,n) + margin, 0) over the batch; encoder-only
// update, heads untouched. Triplets are re-validated here because a violated
// constraint silently inverts the objective.
inline LossReport tlp_pretrain_step(ModelParams& p, const Corpus& corpus,
                                    const std::vector<Triplet>& batch, double margin,
                                    double lr, double clip) {
  if (batch.empty()) throw ValidationError("tlp_pretrain_step: empty batch");
  if (margin < 0.0) throw ValidationError("tlp_pretrain_step: margin must be >= 0");
  for (const Triplet& t : batch) {
    const auto violations = validate_triplet(corpus, t);
    if (!violations.empty()) {
      std::string msg = "tlp_pretrain_step: invalid triplet (anchor " + t.anchor_id + "):";
      for (const std::string& v : violations) msg += " " + v + ";";
      throw ValidationError(msg);
    }
  }
  Tape tape;
  auto bound = bind_params(p, tape);
  auto encode_one = [&](const std::string& id) {
    Tensor h = encode_rows(p, bound, {&corpus.article(id)});
    return p.normalize_repr ? l2_normalize_rows(h) : h;
  };
  std::vector<Tensor> hinges;
  hinges.reserve(batch.size());
  for (const Triplet& t : batch) {
    Tensor ha = encode_one(t.anchor_id);
    Tensor d_ap = euclidean_distance(ha, encode_one(t.positive_id));
    Tensor d_an = euclidean_distance(ha, encode_one(t.negative_id));
    hinges.push_back(relu(add_const(sub(d_ap, d_an), margin)));
  }
  Tensor loss = scale(sum_all(stack_rows(hinges)), 1.0 / static_cast<double>(batch.size()));
  Gradients grads = backward(loss);
  LossReport rep;
  rep.triplet_loss = loss.scalar();
  rep.grad_norm = sgd_step(detail::param_group(bound, {"encoder."}), grads, lr, clip);
  return rep;
}

// Forward-only distance audit: mean anchor-positive and anchor-negative
// encoder distances over a triplet list.
struct TripletDistances {
  double mean_positive = 0.0;
  double mean_negative = 0.0;
};

inline TripletDistances mean_triplet_distances(const ModelParams& p, const Corpus& corpus,
                                               const std::vector<Triplet>& ts) {
  if (ts.empty()) throw ValidationError("mean_triplet_distances: empty triplet list");
  auto encode_one = [&](const std::string& id) {
    Tensor h = encode_article(p, corpus.article(id));
    return p.normalize_repr ? l2_normalize_rows(h) : h;
  };
  TripletDistances d;
  for (const Triplet& t : ts) {
    Tensor ha = encode_one(t.anchor_id);
    d.mean_positive += euclidean_distance(ha, encode_one(t.positive_id)).scalar();
    d.mean_negative += euclidean_distance(ha, encode_one(t.negative_id)).scalar();
  }
  d.mean_positive /= static_cast<double>(ts.size());
  d.mean_negative /= static_cast<double>(ts.size());
  return d;
}

// ---------------------------------------------------------------------------
// Prediction (tape-free).

struct Prediction {
  Ideology label = Ideology::Left;
  std::array<double, 3> probabilities{};
};

namespace detail {

// Vector for an article's medium; unknown media fall back to the mean of the
// training media's vectors (the supplied map may also cover test media, in
// which case their true vectors are used directly).
inline std::vector<double> feature_or_fallback(const ModelParams& p, const FeatureLookup& features,
                                               const std::string& medium_id) {
  auto it = features.find(medium_id);
  if (it != features.end()) {
    if (it->second.size() != p.media_feature_width)
      throw ValidationError("media vector for medium \"" + medium_id + "\" has width " +
                            std::to_string(it->second.size()) + ", expected " +
                            std::to_string(p.media_feature_width));
    return it->second;
  }
  std::vector<std::vector<double>> known;
  for (const std::string& m : p.media_classes) {
    auto jt = features.find(m);
    if (jt != features.end()) known.push_back(jt->second);
  }
  if (known.empty())
    for (const auto& [id, v] : features) known.push_back(v);
  if (known.empty()) throw ValidationError("media features enabled but no vectors supplied");
  const auto mean = average_vectors(known);
  if (mean.size() != p.media_feature_width)
    throw ValidationError("media vectors have width " + std::to_string(mean.size()) + ", expected " +
                          std::to_string(p.media_feature_width));
  return mean;
}

}  // namespace detail

inline Prediction predict(const ModelParams& p, const Article& a, const FeatureLookup* features = nullptr) {
  Tensor h = encode_article(p, a);
  Tensor x = h;
  if (p.media_feature_width > 0) {
    if (!features) throw ValidationError("predict: model consumes media features but none were supplied");
    const auto vec = detail::feature_or_fallback(p, *features, a.medium_id);
    x = concat_cols(h, constant(1, vec.size(), vec));
  }
  Tensor logits = linear_forward(x, p.tensor("label_head.w"), p.tensor("label_head.b"));

  Prediction out;
  double m = logits.at(0, 0);
  for (std::size_t j = 1; j < 3; ++j) m = std::max(m, logits.at(0, j));
  double sum = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    out.probabilities[j] = std::exp(logits.at(0, j) - m);
    sum += out.probabilities[j];
  }
  std::size_t best = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    out.probabilities[j] /= sum;
    if (out.probabilities[j] > out.probabilities[best]) best = j;  // strict: ties keep the lowest ordinal
  }
  out.label = static_cast<Ideology>(static_cast<int>(best));
  return out;
}

inline std::vector<int> predict_labels(const ModelParams& p, const Corpus& corpus,
                                       const std::vector<std::string>& ids,
                                       const FeatureLookup* features = nullptr) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (const std::string& id : ids)
    out.push_back(ordinal(predict(p, corpus.article(id), features).label));
  return out;
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochLog {
  std::size_t epoch = 0;  // 1-indexed
  double l_y = 0.0;
  double l_m = 0.0;
  double valid_macro_f1 = 0.0;
  double valid_acc = 0.0;
  double valid_mae = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"L_y", l_y},
            {"L_m", l_m},
            {"valid_macro_f1", valid_macro_f1},
            {"valid_acc", valid_acc},
            {"valid_mae", valid_mae}};
  }
};

inline std::string epoch_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const EpochLog& e : log) out << e.to_json().dump() << '\n';
  return out.str();
}

struct TrainResult {
  ModelParams params;  // snapshot of the best epoch by validation macro-F1
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 1-indexed
  double best_valid_macro_f1 = 0.0;
  std::size_t epochs_run = 0;
  std::vector<double> pretrain_loss;  // TLP: mean triplet loss per pre-training epoch
  std::vector<Triplet> triplets;      // TLP: the mined training triplets
  std::size_t relaxed_triplets = 0;
};

namespace detail {

inline std::map<std::string, Tensor> clone_tensors(const std::map<std::string, Tensor>& src) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : src) out.emplace(name, constant(t.rows, t.cols, *t.data));
  return out;
}

}  // namespace detail

inline TrainResult train_model(const Corpus& corpus, const SplitAssignment& split,
                               const TrainConfig& cfg, const FeatureLookup* features = nullptr) {
  validate_config(cfg);

  std::size_t feature_width = 0;
  if (cfg.use_media_features) {
    if (!features || features->empty())
      throw ValidationError("train_model: use_media_features is set but no vectors were supplied");
    feature_width = features->begin()->second.size();
    for (const auto& [id, v] : *features)
      if (v.size() != feature_width)
        throw ValidationError("train_model: media vector for \"" + id + "\" has width " +
                              std::to_string(v.size()) + " but \"" + features->begin()->first +
                              "\" has width " + std::to_string(feature_width));
    if (feature_width == 0) throw ValidationError("train_model: media vectors are empty");
  }

  TrainResult result;
  result.params = init_model(corpus, split, cfg, feature_width);
  ModelParams& p = result.params;

  std::vector<std::string> train_ids = split.ids_of(Subset::Train);
  const std::vector<std::string> valid_ids = split.ids_of(Subset::Valid);
  if (valid_ids.empty()) throw ValidationError("train_model: split has an empty valid set (needed for early stopping)");

  // Triplet pre-training, then the label head starts fresh for fine-tuning.
  if (cfg.regime == Regime::TLP) {
    result.triplets = mine_triplets(corpus, split, cfg.n_triplets, Rng::derive(cfg.seed, "triplets"),
                                    cfg.allow_relaxed);
    for (const Triplet& t : result.triplets)
      if (t.relaxed) ++result.relaxed_triplets;
    Rng pre_rng(Rng::derive(cfg.seed, "pretrain-order"));
    for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
      pre_rng.shuffle(result.triplets);
      double total = 0.0;
      std::size_t steps = 0;
      for (std::size_t i = 0; i < result.triplets.size(); i += cfg.batch_size) {
        const std::size_t hi = std::min(i + cfg.batch_size, result.triplets.size());
        std::vector<Triplet> batch(result.triplets.begin() + static_cast<std::ptrdiff_t>(i),
                                   result.triplets.begin() + static_cast<std::ptrdiff_t>(hi));
        total += tlp_pretrain_step(p, corpus, batch, cfg.margin, cfg.lr, cfg.clip).triplet_loss;
        ++steps;
      }
      result.pretrain_loss.push_back(total / static_cast<double>(steps));
    }
    for (const char* name : {"label_head.w", "label_head.b"}) {
      auto& t = p.tensors.at(name);
      std::fill(t.data->begin(), t.data->end(), 0.0);
    }
  }

  const bool is_aa = cfg.regime == Regime::AA;
  std::vector<int> valid_labels;
  for (const std::string& id : valid_ids) valid_labels.push_back(ordinal(corpus.article(id).label));

  Rng order_rng(Rng::derive(cfg.seed, "order"));
  std::vector<double> history;
  std::map<std::string, Tensor> best_snapshot;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(train_ids);
    double sum_y = 0.0, sum_m = 0.0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < train_ids.size(); i += cfg.batch_size) {
      const std::size_t hi = std::min(i + cfg.batch_size, train_ids.size());
      const std::vector<std::string> ids(train_ids.begin() + static_cast<std::ptrdiff_t>(i),
                                         train_ids.begin() + static_cast<std::ptrdiff_t>(hi));
      const auto batch = make_batch(p, corpus, ids, is_aa);
      const LossReport rep = is_aa
                                 ? aa_train_step(p, batch, *cfg.lambda, cfg.lr, cfg.clip)
                                 : finetune_step(p, batch, cfg.use_media_features ? features : nullptr,
                                                 cfg.lr, cfg.clip);
      sum_y += rep.label_loss;
      sum_m += rep.media_loss;
      ++steps;
    }

    const std::vector<int> preds =
        predict_labels(p, corpus, valid_ids, cfg.use_media_features ? features : nullptr);
    const MetricsReport valid = compute_metrics(valid_labels, preds, kNumClasses);

    EpochLog entry;
    entry.epoch = epoch;
    entry.l_y = sum_y / static_cast<double>(steps);
    entry.l_m = sum_m / static_cast<double>(steps);
    entry.valid_macro_f1 = valid.macro_f1;
    entry.valid_acc = valid.accuracy;
    entry.valid_mae = valid.mae;
    result.log.push_back(entry);
    result.epochs_run = epoch;

    history.push_back(valid.macro_f1);
    if (result.best_epoch == 0 || valid.macro_f1 > result.best_valid_macro_f1) {
      result.best_valid_macro_f1 = valid.macro_f1;
      result.best_epoch = epoch;
      best_snapshot = detail::clone_tensors(p.tensors);
    }
    if (early_stopping_check(history, cfg.patience).stop) break;
  }

  p.tensors = std::move(best_snapshot);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: a single JSON document; doubles survive the round trip exactly.

inline nlohmann::json model_to_json(const ModelParams& p) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : p.tensors)
    tensors[name] = {{"rows", t.rows}, {"cols", t.cols}, {"data", *t.data}};
  return {{"dims", {{"d_embed", p.dims.d_embed}, {"d_hidden", p.dims.d_hidden}, {"d_repr", p.dims.d_repr}}},
          {"max_tokens", p.max_tokens},
          {"vocab", p.vocab},
          {"media_classes", p.media_classes},
          {"media_feature_width", p.media_feature_width},
          {"feature_name", p.feature_name},
          {"normalize_repr", p.normalize_repr},
          {"tensors", tensors}};
}

inline ModelParams model_from_json(const nlohmann::json& j) {
  ModelParams p;
  try {
    p.dims.d_embed = j.at("dims").at("d_embed").get<std::size_t>();
    p.dims.d_hidden = j.at("dims").at("d_hidden").get<std::size_t>();
    p.dims.d_repr = j.at("dims").at("d_repr").get<std::size_t>();
    p.max_tokens = j.at("max_tokens").get<std::size_t>();
    p.vocab = j.at("vocab").get<std::map<std::string, std::size_t>>();
    p.media_classes = j.at("media_classes").get<std::vector<std::string>>();
    p.media_feature_width = j.at("media_feature_width").get<std::size_t>();
    p.feature_name = j.at("feature_name").get<std::string>();
    p.normalize_repr = j.at("normalize_repr").get<bool>();
    for (const auto& [name, tj] : j.at("tensors").items())
      p.tensors.emplace(name, constant(tj.at("rows").get<std::size_t>(), tj.at("cols").get<std::size_t>(),
                                       tj.at("data").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model checkpoint: ") + e.what());
  }
  return p;
}

inline void save_model(const ModelParams& p, const std::filesystem::path& path) {
  write_file(path, model_to_json(p).dump() + "\n");
}

inline ModelParams load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// TrainConfig serialization (used by run configs and checkpoint sidecars).

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j{{"regime", to_string(c.regime)},
                   {"margin", c.margin},
                   {"lr", c.lr},
                   {"clip", c.clip},
                   {"batch_size", c.batch_size},
                   {"max_epochs", c.max_epochs},
                   {"patience", c.patience},
                   {"seed", c.seed},
                   {"use_media_features", c.use_media_features},
                   {"feature_name", c.feature_name},
                   {"d_embed", c.dims.d_embed},
                   {"d_hidden", c.dims.d_hidden},
                   {"d_repr", c.dims.d_repr},
                   {"max_tokens", c.max_tokens},
                   {"normalize_repr", c.normalize_repr},
                   {"pretrain_epochs", c.pretrain_epochs},
                   {"n_triplets", c.n_triplets},
                   {"allow_relaxed", c.allow_relaxed}};
  if (c.lambda) j["lambda"] = *c.lambda;
  return j;
}

// Applies fields present in j on top of base; unknown fields are an error so
// config typos fail loudly.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  static const std::set<std::string> known{
      "regime", "lambda", "margin", "lr", "clip", "batch_size", "max_epochs",
      "patience", "seed", "use_media_features", "feature_name", "d_embed",
      "d_hidden", "d_repr", "max_tokens", "normalize_repr", "pretrain_epochs",
      "n_triplets", "allow_relaxed"};
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ValidationError("unknown config field \"" + key + "\"");
  TrainConfig c = base;
  try {
    if (j.contains("regime")) c.regime = parse_regime(j.at("regime").get<std::string>());
    if (j.contains("lambda")) {
      if (j.at("lambda").is_null())
        c.lambda.reset();
      else
        c.lambda = j.at("lambda").get<double>();
    }
    if (j.contains("margin")) c.margin = j.at("margin").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("clip")) c.clip = j.at("clip").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("use_media_features")) c.use_media_features = j.at("use_media_features").get<bool>();
    if (j.contains("feature_name")) c.feature_name = j.at("feature_name").get<std::string>();
    if (j.contains("d_embed")) c.dims.d_embed = j.at("d_embed").get<std::size_t>();
    if (j.contains("d_hidden")) c.dims.d_hidden = j.at("d_hidden").get<std::size_t>();
    if (j.contains("d_repr")) c.dims.d_repr = j.at("d_repr").get<std::size_t>();
    if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<std::size_t>();
    if (j.contains("normalize_repr")) c.normalize_repr = j.at("normalize_repr").get<bool>();
    if (j.contains("pretrain_epochs")) c.pretrain_epochs = j.at("pretrain_epochs").get<std::size_t>();
    if (j.contains("n_triplets")) c.n_triplets = j.at("n_triplets").get<std::size_t>();
    if (j.contains("allow_relaxed")) c.allow_relaxed = j.at("allow_relaxed").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  return c;
}

}  // namespace debias
