#pragma once

// Experiment runner: binds corpora, splits, triplet mining, training,
// evaluation, and the source probe into reproducible commands. Every
// artifact-producing command writes into runs/<command>-<hash>/ where the hash
// is derived from the command's inputs (file contents, resolved config, seed),
// never from wall-clock time: re-running a command reproduces the same
// directory with byte-identical primary artifacts.

#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/eval.hpp"
#include "debias/media_features.hpp"
#include "debias/metrics.hpp"
#include "debias/model.hpp"
#include "debias/splits.hpp"
#include "debias/triplets.hpp"

namespace debias::cli {

inline std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Run manifests.

struct RunManifest {
  std::string command;
  std::string run_id;  // content-derived; names the run directory
  nlohmann::json config;
  std::map<std::string, std::string> input_hashes;  // input name -> content hash
  std::uint64_t seed = 0;
  std::string started_at;   // informational: not part of run_id
  std::string finished_at;  // informational: not part of run_id
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    return {{"command", command},     {"run_id", run_id},
            {"config", config},       {"inputs", input_hashes},
            {"seed", seed},           {"started_at", started_at},
            {"finished_at", finished_at}, {"outputs", outputs}};
  }
};

inline std::string run_identity(const std::string& command, const nlohmann::json& config,
                                const std::map<std::string, std::string>& input_hashes,
                                std::uint64_t seed) {
  const nlohmann::json j = {
      {"command", command}, {"config", config}, {"inputs", input_hashes}, {"seed", seed}};
  return hex16(fnv1a64(j.dump()));
}

// One run directory plus its manifest. write() records every artifact so the
// manifest lists exactly what the run produced.
class RunDir {
 public:
  RunDir(const std::filesystem::path& runs_root, std::string command, nlohmann::json config,
         std::map<std::string, std::string> input_hashes, std::uint64_t seed) {
    manifest_.command = std::move(command);
    manifest_.config = std::move(config);
    manifest_.input_hashes = std::move(input_hashes);
    manifest_.seed = seed;
    manifest_.run_id = run_identity(manifest_.command, manifest_.config, manifest_.input_hashes, seed);
    manifest_.started_at = iso_utc_now();
    dir_ = runs_root / (manifest_.command + "-" + manifest_.run_id);
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  const std::string& run_id() const { return manifest_.run_id; }

  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    manifest_.outputs.push_back(name);
  }

  // Writes manifest.json; call once, after all artifacts.
  void finish() {
    manifest_.finished_at = iso_utc_now();
    write_file(dir_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  RunManifest manifest_;
};

// ---------------------------------------------------------------------------
// Shared helpers.

inline Corpus load_corpus_file(const std::string& path) {
  try {
    return parse_corpus_jsonl(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::string describe_config(const TrainConfig& cfg) {
  std::string name{to_string(cfg.regime)};
  if (cfg.regime == Regime::AA && cfg.lambda)
    name += " (lambda=" + format_fixed(*cfg.lambda, 1) + ")";
  if (cfg.use_media_features) name += " + media features";
  return name;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"n_media", s.n_media},
          {"articles_per_medium", s.articles_per_medium},
          {"dominant_prob", s.dominant_prob},
          {"n_topics", s.n_topics},
          {"multi_topic_prob", s.multi_topic_prob},
          {"style_slots", s.style_slots},
          {"ideology_slots", s.ideology_slots},
          {"topic_slots", s.topic_slots},
          {"noise_slots", s.noise_slots},
          {"style_vocab", s.style_vocab},
          {"ideology_vocab", s.ideology_vocab},
          {"topic_vocab", s.topic_vocab},
          {"noise_vocab", s.noise_vocab},
          {"style_strength", s.style_strength},
          {"ideology_strength", s.ideology_strength},
          {"style_pool_size", s.style_pool_size}};
}

// Resolve the training feature table: explicit vector file beats bios file
// beats hash-fallback vectors built from the corpus itself.
struct FeatureInputs {
  std::string vectors_path;
  std::string bios_path;
  std::size_t fallback_width = 32;
};

inline MediaVectorMap resolve_media_vectors(const Corpus& corpus, const TrainConfig& cfg,
                                            const FeatureInputs& in) {
  if (!in.vectors_path.empty()) return load_media_vectors(in.vectors_path, cfg.feature_name);
  if (!in.bios_path.empty())
    return media_vectors_from_bios(load_bios(in.bios_path), cfg.feature_name, in.fallback_width,
                                   cfg.seed);
  return media_vectors_from_corpus(corpus, cfg.feature_name, in.fallback_width, cfg.seed);
}

inline std::string epoch_line(const EpochLog& e) {
  std::string s = "epoch " + std::to_string(e.epoch) + "  L_y " + format_fixed(e.l_y, 4);
  if (e.l_m > 0.0) s += "  L_m " + format_fixed(e.l_m, 4);
  s += "  valid macro-F1 " + format_fixed(e.valid_macro_f1, 2) + "  acc " +
       format_fixed(e.valid_acc, 2) + "  MAE " + format_fixed(e.valid_mae, 3);
  return s;
}

// One training run's artifacts, written under `prefix` ("" or "lambda_0.3/").
inline nlohmann::json write_train_artifacts(RunDir& rd, const std::string& prefix,
                                            const TrainConfig& cfg, const TrainResult& r,
                                            const MediaVectorMap* vectors) {
  rd.write(prefix + "config.json", config_to_json(cfg).dump(2) + "\n");
  rd.write(prefix + "model.json", model_to_json(r.params).dump() + "\n");
  rd.write(prefix + "train_log.jsonl", epoch_log_to_jsonl(r.log));

  nlohmann::json summary;
  summary["label"] = describe_config(cfg);
  summary["best_epoch"] = r.best_epoch;
  summary["epochs_run"] = r.epochs_run;
  summary["best_valid_macro_f1"] = r.best_valid_macro_f1;
  if (!r.log.empty()) {
    const EpochLog& best = r.log[r.best_epoch - 1];
    summary["valid"] = {{"macro_f1", best.valid_macro_f1},
                        {"accuracy", best.valid_acc},
                        {"mae", best.valid_mae}};
  }
  if (cfg.regime == Regime::TLP) {
    summary["pretrain_loss"] = r.pretrain_loss;
    summary["n_triplets"] = r.triplets.size();
    summary["relaxed_triplets"] = r.relaxed_triplets;
    summary["relaxed_fraction"] =
        r.triplets.empty() ? 0.0
                           : static_cast<double>(r.relaxed_triplets) /
                                 static_cast<double>(r.triplets.size());
    rd.write(prefix + "triplets.jsonl", triplets_to_jsonl(r.triplets));
  }
  rd.write(prefix + "train_summary.json", summary.dump(2) + "\n");
  if (vectors) {
    std::string content;
    for (const auto& [id, mv] : *vectors) {
      nlohmann::json j = {{"medium", mv.medium_id}, {"feature", mv.feature_name}, {"vector", mv.vector}};
      content += j.dump() + "\n";
    }
    rd.write(prefix + "media_vectors.jsonl", content);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// The runner. Parses args (program name excluded), executes one command, and
// maps outcomes to exit codes: 0 success, 1 validation/usage error, 2 runtime
// error.

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"media-debiasing experiment runner"};
  app.require_subcommand(1);
  auto runs_root = std::make_shared<std::string>("runs");
  app.add_option("--runs", *runs_root, "directory that receives run artifacts")
      ->capture_default_str();

  // --- synth ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("synth", "generate a synthetic corpus with planted signals");
    auto spec = std::make_shared<SynthSpec>();
    auto seed = std::make_shared<std::uint64_t>(7);
    auto out_path = std::make_shared<std::string>();
    sub->add_option("--media", spec->n_media, "number of media");
    sub->add_option("--per-medium", spec->articles_per_medium, "articles per medium");
    sub->add_option("--dominant-prob", spec->dominant_prob, "P(label = medium majority)");
    sub->add_option("--topics", spec->n_topics, "number of topics");
    sub->add_option("--multi-topic-prob", spec->multi_topic_prob, "chance of a second topic");
    sub->add_option("--style-slots", spec->style_slots, "style token slots per article");
    sub->add_option("--ideology-slots", spec->ideology_slots, "ideology token slots per article");
    sub->add_option("--topic-slots", spec->topic_slots, "topic token slots per article");
    sub->add_option("--noise-slots", spec->noise_slots, "noise token slots per article");
    sub->add_option("--style-vocab", spec->style_vocab, "style token types per style pool");
    sub->add_option("--style-pool-size", spec->style_pool_size,
                    "media per shared style vocabulary (1 = every medium has its own)");
    sub->add_option("--ideology-vocab", spec->ideology_vocab, "ideology token types per class");
    sub->add_option("--topic-vocab", spec->topic_vocab, "topic token types per topic");
    sub->add_option("--noise-vocab", spec->noise_vocab, "noise token types");
    sub->add_option("--style-strength", spec->style_strength, "P(style slot carries a style token)");
    sub->add_option("--ideology-strength", spec->ideology_strength,
                    "P(ideology slot carries an ideology token)");
    sub->add_option("--seed", *seed, "generator seed");
    sub->add_option("--out", *out_path, "write the corpus to this file instead of a run directory");
    sub->callback([&out, runs_root, spec, seed, out_path] {
      const Corpus corpus = synth_corpus(*spec, *seed);
      const std::string content = corpus_to_jsonl(corpus);
      if (out_path->empty()) {
        RunDir rd(*runs_root, "synth", synth_spec_to_json(*spec), {}, *seed);
        rd.write("corpus.jsonl", content);
        rd.finish();
        out << "wrote " << (rd.dir() / "corpus.jsonl").string() << "\n";
      } else {
        write_file(*out_path, content);
        out << "wrote " << *out_path << "\n";
      }
      out << corpus_stats(corpus).to_table();
    });
  }

  // --- ingest ---------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("ingest", "parse, validate, and normalize a corpus file");
    auto corpus_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto do_preprocess = std::make_shared<bool>(false);
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_flag("--preprocess", *do_preprocess,
                  "strip source preambles and replace medium/author mentions with placeholders");
    sub->add_option("--out", *out_path, "write the corpus to this file instead of a run directory");
    sub->callback([&out, runs_root, corpus_path, out_path, do_preprocess] {
      Corpus corpus = load_corpus_file(*corpus_path);
      if (*do_preprocess) {
        for (Article& a : corpus.articles) {
          const std::string& medium_name = corpus.media.at(a.medium_id).name;
          a.title = preprocess_text(a.title, medium_name, a.authors);
          a.body = preprocess_text(a.body, medium_name, a.authors);
        }
      }
      const std::string content = corpus_to_jsonl(corpus);
      const nlohmann::json config = {{"preprocess", *do_preprocess}};
      if (out_path->empty()) {
        RunDir rd(*runs_root, "ingest", config, {{"corpus", hex16(fnv1a64(content))}}, 0);
        rd.write("corpus.jsonl", content);
        rd.finish();
        out << "wrote " << (rd.dir() / "corpus.jsonl").string() << "\n";
      } else {
        write_file(*out_path, content);
        out << "wrote " << *out_path << "\n";
      }
      for (const std::string& w : corpus.warnings) out << "warning: " << w << "\n";
      out << corpus_stats(corpus).to_table();
    });
  }

  // --- stats ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("stats", "print corpus statistics");
    auto corpus_path = std::make_shared<std::string>();
    auto as_json = std::make_shared<bool>(false);
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_flag("--json", *as_json, "print JSON instead of a table");
    sub->callback([&out, corpus_path, as_json] {
      const StatsReport stats = corpus_stats(load_corpus_file(*corpus_path));
      if (*as_json)
        out << stats.to_json().dump(2) << "\n";
      else
        out << stats.to_table();
    });
  }

  // --- split ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "split", "build a media-based split and its paired random split, then verify both");
    auto corpus_path = std::make_shared<std::string>();
    auto test_media = std::make_shared<std::size_t>(12);
    auto per_medium = std::make_shared<std::size_t>(100);
    auto valid_fraction = std::make_shared<double>(0.15);
    auto seed = std::make_shared<std::uint64_t>(7);
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_option("--test-media", *test_media, "number of held-out test media");
    sub->add_option("--per-medium", *per_medium, "test articles per held-out medium");
    sub->add_option("--valid-fraction", *valid_fraction, "validation share of the remainder");
    sub->add_option("--seed", *seed, "split seed");
    sub->callback([&out, runs_root, corpus_path, test_media, per_medium, valid_fraction, seed] {
      const Corpus corpus = load_corpus_file(*corpus_path);
      const SplitAssignment media = media_based_split(corpus, *test_media, *per_medium, *valid_fraction, *seed);
      const SplitAssignment random = random_split(corpus, media, *valid_fraction, *seed);
      const VerificationReport verification = verify_splits(corpus, media, random);

      const nlohmann::json config = {{"test_media", *test_media},
                                     {"per_medium", *per_medium},
                                     {"valid_fraction", *valid_fraction}};
      RunDir rd(*runs_root, "split", config, {{"corpus", file_hash_hex(*corpus_path)}}, *seed);
      rd.write("media_split.json", media.to_json().dump() + "\n");
      rd.write("random_split.json", random.to_json().dump() + "\n");
      rd.write("verification.json", verification.to_json().dump(2) + "\n");
      rd.finish();

      auto sizes = [](const SplitAssignment& s) {
        return std::to_string(s.ids_of(Subset::Train).size()) + " / " +
               std::to_string(s.ids_of(Subset::Valid).size()) + " / " +
               std::to_string(s.ids_of(Subset::Test).size());
      };
      out << "media-based train/valid/test: " << sizes(media) << "\n";
      out << "random      train/valid/test: " << sizes(random) << "\n";
      out << verification.to_table();
      out << "wrote " << rd.dir().string() << "\n";
      if (!verification.all_pass()) throw Error("split verification failed");
    });
  }

  // --- mine -----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("mine", "mine same-topic triplets from a split's train set");
    auto corpus_path = std::make_shared<std::string>();
    auto split_path = std::make_shared<std::string>();
    auto n = std::make_shared<std::size_t>(2000);
    auto seed = std::make_shared<std::uint64_t>(7);
    auto strict = std::make_shared<bool>(false);
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_option("--split", *split_path, "split JSON file")->required();
    sub->add_option("--n", *n, "number of triplets to mine");
    sub->add_option("--seed", *seed, "mining seed");
    sub->add_flag("--strict", *strict, "reject relaxed negatives (different-medium fallback)");
    sub->callback([&out, runs_root, corpus_path, split_path, n, seed, strict] {
      const Corpus corpus = load_corpus_file(*corpus_path);
      const SplitAssignment split = load_split(*split_path);
      const std::vector<Triplet> triplets = mine_triplets(corpus, split, *n, *seed, !*strict);
      std::size_t relaxed = 0;
      for (const Triplet& t : triplets) relaxed += t.relaxed ? 1 : 0;

      const nlohmann::json config = {{"n", *n}, {"allow_relaxed", !*strict}};
      RunDir rd(*runs_root, "mine", config,
                {{"corpus", file_hash_hex(*corpus_path)}, {"split", file_hash_hex(*split_path)}},
                *seed);
      rd.write("triplets.jsonl", triplets_to_jsonl(triplets));
      rd.finish();

      const double fraction =
          triplets.empty() ? 0.0 : static_cast<double>(relaxed) / static_cast<double>(triplets.size());
      out << "mined " << triplets.size() << " triplets, " << relaxed << " relaxed ("
          << format_fixed(100.0 * fraction, 2) << "%)\n";
      out << "wrote " << rd.dir().string() << "\n";
    });
  }

  // --- train ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("train", "train a classifier under one regime, or sweep lambda");
    auto corpus_path = std::make_shared<std::string>();
    auto split_path = std::make_shared<std::string>();
    auto config_path = std::make_shared<std::string>();
    auto feature_in = std::make_shared<FeatureInputs>();
    auto sweep = std::make_shared<bool>(false);

    // Override values live here; only flags the user actually passed are
    // layered over the config file.
    auto regime = std::make_shared<std::string>();
    auto lambda = std::make_shared<double>(0.0);
    auto margin = std::make_shared<double>(1.0);
    auto lr = std::make_shared<double>(0.1);
    auto clip = std::make_shared<double>(5.0);
    auto batch_size = std::make_shared<std::size_t>(16);
    auto max_epochs = std::make_shared<std::size_t>(30);
    auto patience = std::make_shared<std::size_t>(5);
    auto seed = std::make_shared<std::uint64_t>(7);
    auto d_embed = std::make_shared<std::size_t>(32);
    auto d_hidden = std::make_shared<std::size_t>(32);
    auto d_repr = std::make_shared<std::size_t>(32);
    auto max_tokens = std::make_shared<std::size_t>(64);
    auto normalize_repr = std::make_shared<bool>(false);
    auto pretrain_epochs = std::make_shared<std::size_t>(5);
    auto n_triplets = std::make_shared<std::size_t>(2000);
    auto strict_triplets = std::make_shared<bool>(false);
    auto use_features = std::make_shared<bool>(false);
    auto feature_name = std::make_shared<std::string>();

    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_option("--split", *split_path, "split JSON file")->required();
    sub->add_option("--config", *config_path, "JSON config file (flags override its fields)");
    auto* o_regime = sub->add_option("--regime", *regime, "baseline | aa | tlp");
    auto* o_lambda = sub->add_option("--lambda", *lambda, "gradient-reversal strength (aa only)");
    auto* o_margin = sub->add_option("--margin", *margin, "triplet margin epsilon");
    auto* o_lr = sub->add_option("--lr", *lr, "learning rate");
    auto* o_clip = sub->add_option("--clip", *clip, "global gradient-norm clip");
    auto* o_batch = sub->add_option("--batch-size", *batch_size, "batch size");
    auto* o_epochs = sub->add_option("--max-epochs", *max_epochs, "maximum training epochs");
    auto* o_patience = sub->add_option("--patience", *patience, "early-stopping patience");
    auto* o_seed = sub->add_option("--seed", *seed, "training seed");
    auto* o_de = sub->add_option("--d-embed", *d_embed, "embedding width");
    auto* o_dh = sub->add_option("--d-hidden", *d_hidden, "hidden width");
    auto* o_dr = sub->add_option("--d-repr", *d_repr, "representation width");
    auto* o_mt = sub->add_option("--max-tokens", *max_tokens, "input length in tokens");
    auto* o_norm = sub->add_flag("--normalize-repr", *normalize_repr,
                                 "L2-normalize representations in triplet distances");
    auto* o_pe = sub->add_option("--pretrain-epochs", *pretrain_epochs, "triplet pre-training epochs");
    auto* o_nt = sub->add_option("--n-triplets", *n_triplets, "triplets to mine for tlp");
    auto* o_strict = sub->add_flag("--strict-triplets", *strict_triplets,
                                   "reject relaxed negatives when mining");
    auto* o_uf = sub->add_flag("--use-media-features", *use_features,
                               "concatenate a per-medium feature vector before the label head");
    auto* o_fn = sub->add_option("--feature-name", *feature_name, "name of the media feature");
    sub->add_option("--media-vectors", feature_in->vectors_path, "media vector JSONL file");
    sub->add_option("--bios", feature_in->bios_path, "follower-bios JSONL file to hash-embed");
    sub->add_option("--feature-width", feature_in->fallback_width,
                    "width for hash-embedded fallback vectors");
    sub->add_flag("--sweep-lambda", *sweep, "train aa at lambda = 0.0, 0.1, ..., 1.0");

    sub->callback([&out, runs_root, corpus_path, split_path, config_path, feature_in, sweep, regime,
                   lambda, margin, lr, clip, batch_size, max_epochs, patience, seed, d_embed,
                   d_hidden, d_repr, max_tokens, normalize_repr, pretrain_epochs, n_triplets,
                   strict_triplets, use_features, feature_name, o_regime, o_lambda, o_margin, o_lr,
                   o_clip, o_batch, o_epochs, o_patience, o_seed, o_de, o_dh, o_dr, o_mt, o_norm,
                   o_pe, o_nt, o_strict, o_uf, o_fn] {
      const Corpus corpus = load_corpus_file(*corpus_path);
      const SplitAssignment split = load_split(*split_path);

      TrainConfig cfg;
      if (!config_path->empty()) {
        nlohmann::json file_json;
        try {
          file_json = nlohmann::json::parse(read_file(*config_path));
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError(*config_path + ": invalid JSON: " + e.what());
        }
        cfg = config_from_json(file_json, cfg);
      }
      nlohmann::json ov = nlohmann::json::object();
      if (o_regime->count()) ov["regime"] = *regime;
      if (o_lambda->count()) ov["lambda"] = *lambda;
      if (o_margin->count()) ov["margin"] = *margin;
      if (o_lr->count()) ov["lr"] = *lr;
      if (o_clip->count()) ov["clip"] = *clip;
      if (o_batch->count()) ov["batch_size"] = *batch_size;
      if (o_epochs->count()) ov["max_epochs"] = *max_epochs;
      if (o_patience->count()) ov["patience"] = *patience;
      if (o_seed->count()) ov["seed"] = *seed;
      if (o_de->count()) ov["d_embed"] = *d_embed;
      if (o_dh->count()) ov["d_hidden"] = *d_hidden;
      if (o_dr->count()) ov["d_repr"] = *d_repr;
      if (o_mt->count()) ov["max_tokens"] = *max_tokens;
      if (o_norm->count()) ov["normalize_repr"] = *normalize_repr;
      if (o_pe->count()) ov["pretrain_epochs"] = *pretrain_epochs;
      if (o_nt->count()) ov["n_triplets"] = *n_triplets;
      if (o_strict->count()) ov["allow_relaxed"] = !*strict_triplets;
      if (o_uf->count()) ov["use_media_features"] = *use_features;
      if (o_fn->count()) ov["feature_name"] = *feature_name;
      cfg = config_from_json(ov, cfg);

      MediaVectorMap vectors;
      FeatureLookup lookup;
      const FeatureLookup* lookup_ptr = nullptr;
      if (cfg.use_media_features) {
        vectors = resolve_media_vectors(corpus, cfg, *feature_in);
        lookup = feature_lookup(vectors);
        lookup_ptr = &lookup;
      }

      std::map<std::string, std::string> inputs = {{"corpus", file_hash_hex(*corpus_path)},
                                                   {"split", file_hash_hex(*split_path)}};
      if (!feature_in->vectors_path.empty())
        inputs["media_vectors"] = file_hash_hex(feature_in->vectors_path);
      if (!feature_in->bios_path.empty()) inputs["bios"] = file_hash_hex(feature_in->bios_path);

      if (*sweep) {
        cfg.regime = Regime::AA;
        nlohmann::json identity = config_to_json(cfg);
        identity["sweep_lambda"] = true;
        RunDir rd(*runs_root, "train", identity, inputs, cfg.seed);
        TextTable table;
        table.header({"lambda", "valid macro F1", "valid acc", "best epoch"});
        nlohmann::json sweep_rows = nlohmann::json::array();
        for (int k = 0; k <= 10; ++k) {
          TrainConfig step = cfg;
          step.lambda = static_cast<double>(k) / 10.0;
          const std::string prefix = "lambda_" + format_fixed(*step.lambda, 1) + "/";
          const TrainResult r = train_model(corpus, split, step, lookup_ptr);
          const nlohmann::json summary = write_train_artifacts(rd, prefix, step, r, nullptr);
          table.row({format_fixed(*step.lambda, 1), format_fixed(r.best_valid_macro_f1, 2),
                     format_fixed(summary.at("valid").at("accuracy").get<double>(), 2),
                     std::to_string(r.best_epoch)});
          sweep_rows.push_back({{"lambda", *step.lambda},
                                {"best_valid_macro_f1", r.best_valid_macro_f1},
                                {"best_epoch", r.best_epoch}});
        }
        rd.write("sweep.json", sweep_rows.dump(2) + "\n");
        rd.finish();
        out << table.to_string();
        out << "wrote " << rd.dir().string() << "\n";
        return;
      }

      RunDir rd(*runs_root, "train", config_to_json(cfg), inputs, cfg.seed);
      const TrainResult r = train_model(corpus, split, cfg, lookup_ptr);
      write_train_artifacts(rd, "", cfg, r, lookup_ptr ? &vectors : nullptr);
      rd.finish();

      for (const EpochLog& e : r.log) out << epoch_line(e) << "\n";
      out << "best epoch " << r.best_epoch << " (valid macro-F1 "
          << format_fixed(r.best_valid_macro_f1, 2) << ")\n";
      if (cfg.regime == Regime::TLP && !r.triplets.empty())
        out << "triplets: " << r.triplets.size() << " mined, " << r.relaxed_triplets << " relaxed ("
            << format_fixed(100.0 * static_cast<double>(r.relaxed_triplets) /
                                static_cast<double>(r.triplets.size()),
                            2)
            << "%)\n";
      out << "wrote " << rd.dir().string() << "\n";
    });
  }

  // --- eval -----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("eval", "score a trained model on a split subset");
    auto corpus_path = std::make_shared<std::string>();
    auto split_path = std::make_shared<std::string>();
    auto model_path = std::make_shared<std::string>();
    auto vectors_path = std::make_shared<std::string>();
    auto subset_name = std::make_shared<std::string>("test");
    auto label = std::make_shared<std::string>();
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_option("--split", *split_path, "split JSON file")->required();
    sub->add_option("--model", *model_path, "model checkpoint JSON")->required();
    sub->add_option("--subset", *subset_name, "test | valid")->capture_default_str();
    sub->add_option("--media-vectors", *vectors_path,
                    "media vector JSONL file (required when the model concatenates features)");
    sub->add_option("--label", *label, "row label for reports (default: model directory name)");
    sub->callback([&out, runs_root, corpus_path, split_path, model_path, vectors_path, subset_name,
                   label] {
      const Corpus corpus = load_corpus_file(*corpus_path);
      const SplitAssignment split = load_split(*split_path);
      const ModelParams params = load_model(*model_path);
      Subset subset;
      if (*subset_name == "test")
        subset = Subset::Test;
      else if (*subset_name == "valid")
        subset = Subset::Valid;
      else
        throw ValidationError("eval: subset must be \"test\" or \"valid\", got \"" + *subset_name +
                              "\"");

      FeatureLookup lookup;
      const FeatureLookup* lookup_ptr = nullptr;
      if (params.media_feature_width > 0) {
        if (vectors_path->empty())
          throw ValidationError("eval: the model concatenates \"" + params.feature_name +
                                "\" media vectors; pass --media-vectors");
        lookup = feature_lookup(load_media_vectors(*vectors_path, params.feature_name));
        lookup_ptr = &lookup;
      }

      const EvalReport report = evaluate_split(params, corpus, split, subset, lookup_ptr);
      std::string row_label = *label;
      if (row_label.empty()) {
        const auto parent = std::filesystem::path(*model_path).parent_path().filename().string();
        row_label = parent.empty() ? "model" : parent;
      }

      std::map<std::string, std::string> inputs = {{"corpus", file_hash_hex(*corpus_path)},
                                                   {"split", file_hash_hex(*split_path)},
                                                   {"model", file_hash_hex(*model_path)}};
      if (!vectors_path->empty()) inputs["media_vectors"] = file_hash_hex(*vectors_path);
      RunDir rd(*runs_root, "eval", {{"subset", *subset_name}, {"label", row_label}}, inputs, 0);
      nlohmann::json j = report.to_json();
      j["label"] = row_label;
      rd.write("metrics.json", j.dump(2) + "\n");
      rd.finish();

      out << results_table({{row_label, report.metrics}});
      out << "wrote " << rd.dir().string() << "\n";
    });
  }

  // --- probe ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "probe", "train a source-prediction probe to measure medium leakage in the text");
    auto corpus_path = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(7);
    auto opts = std::make_shared<ProbeOptions>();
    sub->add_option("--corpus", *corpus_path, "corpus JSONL file")->required();
    sub->add_option("--seed", *seed, "probe seed (split and training)");
    sub->add_option("--lr", opts->lr, "learning rate");
    sub->add_option("--max-epochs", opts->max_epochs, "maximum epochs");
    sub->add_option("--patience", opts->patience, "early-stopping patience");
    sub->add_option("--batch-size", opts->batch_size, "batch size");
    sub->add_option("--max-tokens", opts->max_tokens, "input length in tokens");
    sub->add_option("--d-embed", opts->dims.d_embed, "embedding width");
    sub->add_option("--d-hidden", opts->dims.d_hidden, "hidden width");
    sub->add_option("--d-repr", opts->dims.d_repr, "representation width");
    sub->callback([&out, runs_root, corpus_path, seed, opts] {
      const Corpus corpus = load_corpus_file(*corpus_path);
      const ProbeReport report = source_probe(corpus, *seed, *opts);

      const nlohmann::json config = {{"lr", opts->lr},
                                     {"max_epochs", opts->max_epochs},
                                     {"patience", opts->patience},
                                     {"batch_size", opts->batch_size},
                                     {"max_tokens", opts->max_tokens},
                                     {"d_embed", opts->dims.d_embed},
                                     {"d_hidden", opts->dims.d_hidden},
                                     {"d_repr", opts->dims.d_repr}};
      RunDir rd(*runs_root, "probe", config, {{"corpus", file_hash_hex(*corpus_path)}}, *seed);
      rd.write("probe.json", report.to_json().dump(2) + "\n");
      rd.finish();

      out << report.to_table();
      out << "probe accuracy " << format_fixed(report.probe.accuracy, 2) << " vs majority "
          << format_fixed(report.majority.accuracy, 2) << " over " << report.n_media << " media\n";
      out << "wrote " << rd.dir().string() << "\n";
    });
  }

  // --- report ---------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "report", "regenerate the regime-comparison table from stored eval artifacts");
    auto dirs = std::make_shared<std::vector<std::string>>();
    auto out_path = std::make_shared<std::string>();
    sub->add_option("dirs", *dirs, "eval run directories (each holding metrics.json)")
        ->required()
        ->expected(-1);
    sub->add_option("--out", *out_path, "also write the table to this file");
    sub->callback([&out, dirs, out_path] {
      std::vector<RegimeRow> rows;
      for (const std::string& dir : *dirs) {
        const std::filesystem::path path = std::filesystem::path(dir) / "metrics.json";
        RegimeRow row;
        try {
          const nlohmann::json j = nlohmann::json::parse(read_file(path));
          row.name = j.value("label", dir);
          row.metrics.macro_f1 = j.at("macro_f1").get<double>();
          row.metrics.accuracy = j.at("accuracy").get<double>();
          row.metrics.mae = j.at("mae").get<double>();
        } catch (const Error&) {
          throw ValidationError("report: " + dir + " has no readable metrics.json");
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("report: " + path.string() + ": " + e.what());
        }
        rows.push_back(std::move(row));
      }
      const std::string table = results_table(rows);
      out << table;
      if (!out_path->empty()) {
        write_file(*out_path, table);
        out << "wrote " << *out_path << "\n";
      }
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace debias::cli
