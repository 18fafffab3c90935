#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "debias/cli.hpp"

using namespace debias;
namespace fs = std::filesystem;

namespace {

// Self-cleaning workspace; each command targets a --runs root inside it.
struct CliWorld {
  fs::path root;

  CliWorld() {
    static std::atomic<int> counter{0};
    root = fs::temp_directory_path() /
           ("debias_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(root);
  }
  ~CliWorld() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }

  std::string p(const std::string& rel) const { return (root / rel).string(); }

  struct Result {
    int code;
    std::string out;
    std::string err;
  };

  Result run(std::vector<std::string> args) const {
    std::ostringstream out, err;
    args.insert(args.begin(), {"--runs", p("runs")});
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
  }

  // The path from the last "wrote <path>" line a command printed.
  static std::string wrote(const std::string& text) {
    std::string last;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("wrote ", 0) == 0) last = line.substr(6);
    return last;
  }
};

// Small planted-signal corpus written through the CLI itself.
std::string make_corpus(const CliWorld& w, const std::string& name,
                        std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {"synth",        "--media", "6",    "--per-medium", "12",
                                   "--dominant-prob", "1.0",  "--out", w.p(name),      "--seed", "5"};
  args.insert(args.end(), extra.begin(), extra.end());
  const auto r = w.run(args);
  REQUIRE(r.code == 0);
  return w.p(name);
}

// A paired split over that corpus; returns the split run directory.
std::string make_split(const CliWorld& w, const std::string& corpus) {
  const auto r = w.run({"split", "--corpus", corpus, "--test-media", "2", "--per-medium", "6",
                        "--seed", "9"});
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("pass") != std::string::npos);
  return CliWorld::wrote(r.out);
}

const std::vector<std::string> kFastTrain = {"--d-embed", "8",  "--d-hidden",  "8",
                                             "--d-repr",  "8",  "--max-epochs", "3",
                                             "--patience", "2", "--lr",        "0.5"};

}  // namespace

TEST_CASE("cli: help and usage errors") {
  CliWorld w;
  const auto help = w.run({"--help"});
  REQUIRE(help.code == 0);
  REQUIRE(help.out.find("experiment runner") != std::string::npos);

  const auto unknown = w.run({"frobnicate"});
  REQUIRE(unknown.code == 1);
  REQUIRE(unknown.err.find("usage error") != std::string::npos);

  const auto missing = w.run({"stats"});
  REQUIRE(missing.code == 1);  // --corpus is required
}

TEST_CASE("cli: synth writes a parseable corpus and stats reads it") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  REQUIRE(fs::exists(corpus));
  const Corpus parsed = parse_corpus_jsonl(read_file(corpus));
  REQUIRE(parsed.articles.size() == 72);
  REQUIRE(parsed.media.size() == 6);

  const auto stats = w.run({"stats", "--corpus", corpus});
  REQUIRE(stats.code == 0);
  REQUIRE(stats.out.find("articles") != std::string::npos);
  REQUIRE(stats.out.find("72") != std::string::npos);

  const auto json_stats = w.run({"stats", "--corpus", corpus, "--json"});
  REQUIRE(json_stats.code == 0);
  const nlohmann::json j = nlohmann::json::parse(json_stats.out);
  REQUIRE(j.at("articles") == 72);

  const auto absent = w.run({"stats", "--corpus", w.p("nope.jsonl")});
  REQUIRE(absent.code == 2);  // unreadable file is a runtime error
}

TEST_CASE("cli: synth without --out lands in a run directory with a manifest") {
  CliWorld w;
  const auto r = w.run({"synth", "--media", "4", "--per-medium", "5", "--seed", "3"});
  REQUIRE(r.code == 0);
  const fs::path corpus = CliWorld::wrote(r.out);
  REQUIRE(fs::exists(corpus));
  const fs::path dir = corpus.parent_path();
  REQUIRE(dir.filename().string().rfind("synth-", 0) == 0);
  const nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  REQUIRE(manifest.at("command") == "synth");
  REQUIRE(manifest.at("seed") == 3);
  REQUIRE(manifest.at("outputs") == nlohmann::json::array({"corpus.jsonl"}));
  REQUIRE(manifest.at("run_id").get<std::string>().size() == 16);
}

TEST_CASE("cli: split emits both splits plus a passing verification report") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string dir = make_split(w, corpus);
  REQUIRE(fs::exists(fs::path(dir) / "media_split.json"));
  REQUIRE(fs::exists(fs::path(dir) / "random_split.json"));
  REQUIRE(fs::exists(fs::path(dir) / "manifest.json"));

  const nlohmann::json verification =
      nlohmann::json::parse(read_file(fs::path(dir) / "verification.json"));
  REQUIRE(verification.at("all_pass") == true);

  const SplitAssignment media = load_split(fs::path(dir) / "media_split.json");
  REQUIRE(media.ids_of(Subset::Test).size() == 12);  // 2 media x 6 articles
}

TEST_CASE("cli: mine reports the relaxed fraction and writes valid triplets") {
  CliWorld w;
  // Nine media with mixed labels (dominant 0.7): same-label pairs survive in
  // the media-based train set and strict negatives exist inside each medium.
  const auto synth = w.run({"synth", "--media", "9", "--per-medium", "12", "--dominant-prob",
                            "0.7", "--out", w.p("corpus.jsonl"), "--seed", "5"});
  REQUIRE(synth.code == 0);
  const std::string corpus = w.p("corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const auto r = w.run({"mine", "--corpus", corpus, "--split",
                        (fs::path(split_dir) / "media_split.json").string(), "--n", "40", "--seed",
                        "2"});
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("mined 40 triplets") != std::string::npos);
  REQUIRE(r.out.find("relaxed (") != std::string::npos);

  const std::string dir = CliWorld::wrote(r.out);
  const Corpus parsed = parse_corpus_jsonl(read_file(corpus));
  const SplitAssignment split = load_split(fs::path(split_dir) / "media_split.json");
  const std::vector<Triplet> triplets = load_triplets(fs::path(dir) / "triplets.jsonl");
  REQUIRE(triplets.size() == 40);
  for (const Triplet& t : triplets) REQUIRE(validate_triplet(parsed, t, &split).empty());
}

TEST_CASE("cli: train layers config file under flag overrides") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "random_split.json").string();
  write_file(w.p("config.json"), R"({"lr": 0.05, "max_epochs": 2, "d_embed": 8, "d_hidden": 8, "d_repr": 8})");

  const auto r = w.run({"train", "--corpus", corpus, "--split", split, "--config",
                        w.p("config.json"), "--lr", "0.9", "--seed", "21"});
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("epoch 1") != std::string::npos);
  REQUIRE(r.out.find("best epoch") != std::string::npos);

  const fs::path dir = CliWorld::wrote(r.out);
  const nlohmann::json cfg = nlohmann::json::parse(read_file(dir / "config.json"));
  REQUIRE(cfg.at("lr") == 0.9);          // flag wins
  REQUIRE(cfg.at("max_epochs") == 2);    // file wins over default
  REQUIRE(cfg.at("regime") == "baseline");
  REQUIRE(fs::exists(dir / "model.json"));
  REQUIRE(fs::exists(dir / "train_log.jsonl"));

  const nlohmann::json summary = nlohmann::json::parse(read_file(dir / "train_summary.json"));
  REQUIRE(summary.at("label") == "baseline");
  REQUIRE(summary.at("epochs_run") == 2);

  const auto bad = w.run({"train", "--corpus", corpus, "--split", split, "--config",
                          w.p("config.json"), "--regime", "aa", "--seed", "21"});
  REQUIRE(bad.code == 1);  // aa requires lambda
  REQUIRE(bad.err.find("lambda") != std::string::npos);

  write_file(w.p("bad.json"), R"({"learning_rate": 0.1})");
  const auto unknown = w.run({"train", "--corpus", corpus, "--split", split, "--config", w.p("bad.json")});
  REQUIRE(unknown.code == 1);
  REQUIRE(unknown.err.find("unknown config field") != std::string::npos);
}

TEST_CASE("cli: repeated training reproduces artifacts byte for byte") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "random_split.json").string();

  std::vector<std::string> args = {"train", "--corpus", corpus, "--split", split, "--seed", "33"};
  args.insert(args.end(), kFastTrain.begin(), kFastTrain.end());

  std::ostringstream o1, e1, o2, e2;
  std::vector<std::string> run1 = args;
  run1.insert(run1.begin(), {"--runs", w.p("runs_a")});
  std::vector<std::string> run2 = args;
  run2.insert(run2.begin(), {"--runs", w.p("runs_b")});
  REQUIRE(cli::run(run1, o1, e1) == 0);
  REQUIRE(cli::run(run2, o2, e2) == 0);

  const fs::path d1 = CliWorld::wrote(o1.str());
  const fs::path d2 = CliWorld::wrote(o2.str());
  REQUIRE(d1.filename() == d2.filename());  // content-derived run id
  for (const std::string name : {"model.json", "train_log.jsonl", "train_summary.json", "config.json"})
    REQUIRE(read_file(d1 / name) == read_file(d2 / name));
}

TEST_CASE("cli: eval scores a checkpoint and report regenerates the table") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "random_split.json").string();

  std::vector<std::string> train = {"train", "--corpus", corpus, "--split", split, "--seed", "3"};
  train.insert(train.end(), kFastTrain.begin(), kFastTrain.end());
  const auto tr = w.run(train);
  REQUIRE(tr.code == 0);
  const fs::path model = fs::path(CliWorld::wrote(tr.out)) / "model.json";

  const auto ev = w.run({"eval", "--corpus", corpus, "--split", split, "--model", model.string(),
                         "--label", "baseline"});
  REQUIRE(ev.code == 0);
  REQUIRE(ev.out.find("Macro F1") != std::string::npos);
  const fs::path ev_dir = CliWorld::wrote(ev.out);
  const nlohmann::json metrics = nlohmann::json::parse(read_file(ev_dir / "metrics.json"));
  REQUIRE(metrics.at("label") == "baseline");
  REQUIRE(metrics.at("subset") == "test");
  REQUIRE(metrics.at("accuracy").is_number());

  const auto bad_subset = w.run({"eval", "--corpus", corpus, "--split", split, "--model",
                                 model.string(), "--subset", "bogus"});
  REQUIRE(bad_subset.code == 1);

  const auto rep = w.run({"report", ev_dir.string(), "--out", w.p("table.txt")});
  REQUIRE(rep.code == 0);
  REQUIRE(rep.out.find("baseline") != std::string::npos);
  REQUIRE(rep.out.find("MAE") != std::string::npos);
  REQUIRE(read_file(w.p("table.txt")).find("baseline") != std::string::npos);

  const auto rep_missing = w.run({"report", w.p("nothing_here")});
  REQUIRE(rep_missing.code == 1);
  REQUIRE(rep_missing.err.find("metrics.json") != std::string::npos);
}

TEST_CASE("cli: media-feature training round-trips through eval") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "random_split.json").string();

  std::vector<std::string> train = {"train",          "--corpus",      corpus,
                                    "--split",        split,           "--seed",
                                    "3",              "--use-media-features", "--feature-name",
                                    "follower_bios",  "--feature-width", "4"};
  train.insert(train.end(), kFastTrain.begin(), kFastTrain.end());
  const auto tr = w.run(train);
  REQUIRE(tr.code == 0);
  const fs::path dir = CliWorld::wrote(tr.out);
  REQUIRE(fs::exists(dir / "media_vectors.jsonl"));

  const fs::path model = dir / "model.json";
  const auto no_vectors = w.run({"eval", "--corpus", corpus, "--split", split, "--model",
                                 model.string()});
  REQUIRE(no_vectors.code == 1);
  REQUIRE(no_vectors.err.find("--media-vectors") != std::string::npos);

  const auto ev = w.run({"eval", "--corpus", corpus, "--split", split, "--model", model.string(),
                         "--media-vectors", (dir / "media_vectors.jsonl").string()});
  REQUIRE(ev.code == 0);
}

TEST_CASE("cli: tlp training surfaces the miner's feasibility breakdown") {
  CliWorld w;
  // One medium: no positive can come from a different medium, so mining is
  // infeasible by construction.
  SynthSpec spec;
  spec.n_media = 1;
  spec.articles_per_medium = 10;
  const Corpus c = synth_corpus(spec, 4);
  save_corpus(c, w.p("one_medium.jsonl"));
  SplitAssignment split;
  split.kind = SplitKind::Random;
  for (const Article& a : c.articles)
    split.assignment[a.id] = a.id.back() == '0' ? Subset::Valid : Subset::Train;
  save_split(split, w.p("split.json"));

  const auto r = w.run({"train", "--corpus", w.p("one_medium.jsonl"), "--split", w.p("split.json"),
                        "--regime", "tlp", "--n-triplets", "20", "--max-epochs", "2"});
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("no feasible triplets") != std::string::npos);
}

TEST_CASE("cli: tlp training writes triplets and pretrain losses") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "random_split.json").string();

  std::vector<std::string> train = {"train", "--corpus", corpus,      "--split",
                                    split,   "--seed",   "3",         "--regime",
                                    "tlp",   "--n-triplets", "30",    "--pretrain-epochs", "2"};
  train.insert(train.end(), kFastTrain.begin(), kFastTrain.end());
  const auto r = w.run(train);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("triplets:") != std::string::npos);

  const fs::path dir = CliWorld::wrote(r.out);
  REQUIRE(fs::exists(dir / "triplets.jsonl"));
  const nlohmann::json summary = nlohmann::json::parse(read_file(dir / "train_summary.json"));
  REQUIRE(summary.at("pretrain_loss").size() == 2);
  REQUIRE(summary.at("n_triplets") == 30);
  REQUIRE(summary.at("relaxed_fraction").is_number());
}

TEST_CASE("cli: lambda sweep trains eleven runs and tabulates them") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl", {"--noise-slots", "10"});
  const std::string split_dir = make_split(w, corpus);
  const std::string split = (fs::path(split_dir) / "media_split.json").string();

  std::vector<std::string> train = {"train", "--corpus", corpus, "--split", split,
                                    "--seed", "3", "--sweep-lambda", "--max-epochs", "2"};
  train.insert(train.end(), {"--d-embed", "8", "--d-hidden", "8", "--d-repr", "8", "--lr", "0.5",
                             "--patience", "2"});
  const auto r = w.run(train);
  REQUIRE(r.code == 0);

  const fs::path dir = CliWorld::wrote(r.out);
  const nlohmann::json sweep = nlohmann::json::parse(read_file(dir / "sweep.json"));
  REQUIRE(sweep.size() == 11);
  REQUIRE(sweep[0].at("lambda") == 0.0);
  REQUIRE(sweep[10].at("lambda") == 1.0);
  for (int k = 0; k <= 10; ++k) {
    const std::string prefix = "lambda_" + format_fixed(k / 10.0, 1);
    REQUIRE(fs::exists(dir / prefix / "model.json"));
    REQUIRE(fs::exists(dir / prefix / "config.json"));
  }
  // the printed table carries one row per lambda
  REQUIRE(r.out.find("0.7") != std::string::npos);
}

TEST_CASE("cli: probe command writes its report") {
  CliWorld w;
  const std::string corpus = make_corpus(w, "corpus.jsonl");
  const auto r = w.run({"probe", "--corpus", corpus, "--seed", "5", "--max-epochs", "4",
                        "--d-embed", "8", "--d-hidden", "8", "--d-repr", "8"});
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("probe accuracy") != std::string::npos);
  REQUIRE(r.out.find("majority") != std::string::npos);

  const fs::path dir = CliWorld::wrote(r.out);
  const nlohmann::json probe = nlohmann::json::parse(read_file(dir / "probe.json"));
  REQUIRE(probe.at("n_media") == 6);
  REQUIRE(probe.at("probe").at("accuracy").is_number());
  REQUIRE(probe.at("majority").at("accuracy").is_number());
}
