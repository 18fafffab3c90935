#pragma once

// The two evaluation splits: media-based (test media unseen in training,
// their leftover articles excluded) and random (same test set, remaining pool
// stratified by label), plus the leakage checks that keep them honest.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"

namespace debias {

enum class SplitKind { MediaBased, Random };
enum class Subset { Train, Valid, Test };

inline const char* to_string(SplitKind k) { return k == SplitKind::MediaBased ? "media_based" : "random"; }
inline const char* to_string(Subset s) {
  switch (s) {
    case Subset::Train: return "train";
    case Subset::Valid: return "valid";
    case Subset::Test: return "test";
  }
  throw ValidationError("to_string: invalid subset value");
}

inline SplitKind parse_split_kind(const std::string& s) {
  if (s == "media_based") return SplitKind::MediaBased;
  if (s == "random") return SplitKind::Random;
  throw ValidationError("unknown split kind \"" + s + "\"");
}

struct SplitAssignment {
  SplitKind kind = SplitKind::MediaBased;
  std::uint64_t seed = 0;
  std::map<std::string, Subset> assignment;  // article id -> subset
  std::vector<std::string> test_media;
  std::vector<std::string> excluded_ids;     // media-based only

  std::vector<std::string> ids_of(Subset s) const {
    std::vector<std::string> out;
    for (const auto& [id, sub] : assignment)
      if (sub == s) out.push_back(id);
    return out;  // sorted: assignment is an ordered map
  }

  std::size_t count_of(Subset s) const {
    std::size_t n = 0;
    for (const auto& [id, sub] : assignment) n += (sub == s) ? 1 : 0;
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["seed"] = seed;
    j["test_media"] = test_media;
    j["sets"] = {{"train", ids_of(Subset::Train)}, {"valid", ids_of(Subset::Valid)}, {"test", ids_of(Subset::Test)}};
    j["excluded"] = excluded_ids;
    return j;
  }

  static SplitAssignment from_json(const nlohmann::json& j) {
    SplitAssignment s;
    try {
      s.kind = parse_split_kind(j.at("kind").get<std::string>());
      s.seed = j.at("seed").get<std::uint64_t>();
      s.test_media = j.at("test_media").get<std::vector<std::string>>();
      s.excluded_ids = j.at("excluded").get<std::vector<std::string>>();
      const auto& sets = j.at("sets");
      for (const auto& [name, subset] : {std::pair<const char*, Subset>{"train", Subset::Train},
                                         {"valid", Subset::Valid},
                                         {"test", Subset::Test}})
        for (const auto& id : sets.at(name)) {
          auto [_, fresh] = s.assignment.emplace(id.get<std::string>(), subset);
          if (!fresh) throw ValidationError("split JSON assigns article \"" + id.get<std::string>() +
                                            "\" to more than one set");
        }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed split JSON: ") + e.what());
    }
    return s;
  }
};

inline void save_split(const SplitAssignment& split, const std::filesystem::path& path) {
  write_file(path, split.to_json().dump(2) + "\n");
}

inline SplitAssignment load_split(const std::filesystem::path& path) {
  try {
    return SplitAssignment::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Media-based split: pick test media balancing the three majority labels,
// sample per_medium test articles from each, exclude those media's leftovers,
// and deal the remaining media whole into Train/Valid.

inline SplitAssignment media_based_split(const Corpus& corpus, std::size_t n_test_media,
                                         std::size_t per_medium, double valid_fraction,
                                         std::uint64_t seed) {
  if (n_test_media == 0) throw ValidationError("media_based_split: n_test_media must be > 0");
  if (per_medium == 0) throw ValidationError("media_based_split: per_medium must be > 0");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0))
    throw ValidationError("media_based_split: valid_fraction must lie in (0, 1)");
  if (corpus.media.size() <= n_test_media)
    throw ValidationError("media_based_split: need more media than n_test_media (have " +
                          std::to_string(corpus.media.size()) + ", requested " +
                          std::to_string(n_test_media) + " test media)");

  Rng rng(seed);

  // Candidate test media, bucketed by majority label for balance.
  std::vector<std::vector<std::string>> buckets(3);
  std::vector<std::size_t> all_counts;
  for (const auto& [id, m] : corpus.media) {
    all_counts.push_back(m.article_count);
    if (m.article_count >= per_medium)
      buckets[static_cast<std::size_t>(ordinal(m.majority_label))].push_back(id);
  }
  std::size_t eligible = buckets[0].size() + buckets[1].size() + buckets[2].size();
  if (eligible < n_test_media) {
    // The largest per_medium for which n_test_media media would qualify.
    std::sort(all_counts.rbegin(), all_counts.rend());
    const std::size_t feasible = all_counts[n_test_media - 1];
    throw ValidationError("media_based_split: per_medium " + std::to_string(per_medium) +
                          " infeasible; at most " + std::to_string(feasible) +
                          " works for " + std::to_string(n_test_media) + " test media");
  }
  for (auto& b : buckets) rng.shuffle(b);
  std::vector<std::string> test_media;
  for (std::size_t round = 0; test_media.size() < n_test_media; ++round) {
    bool any = false;
    for (auto& b : buckets) {
      if (test_media.size() >= n_test_media) break;
      if (b.empty()) continue;
      test_media.push_back(b.back());
      b.pop_back();
      any = true;
    }
    if (!any) break;  // unreachable given the eligibility check
  }
  std::sort(test_media.begin(), test_media.end());
  const std::set<std::string> test_media_set(test_media.begin(), test_media.end());

  // Group article ids per medium, in corpus order.
  std::map<std::string, std::vector<std::string>> by_medium;
  for (const Article& a : corpus.articles) by_medium[a.medium_id].push_back(a.id);

  SplitAssignment split;
  split.kind = SplitKind::MediaBased;
  split.seed = seed;
  split.test_media = test_media;

  for (const std::string& mid : test_media) {
    auto ids = by_medium.at(mid);
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i < per_medium)
        split.assignment.emplace(ids[i], Subset::Test);
      else
        split.excluded_ids.push_back(ids[i]);
    }
  }
  std::sort(split.excluded_ids.begin(), split.excluded_ids.end());

  // Whole-medium greedy fill of Valid toward valid_fraction of the remainder.
  std::vector<std::string> rest;
  std::size_t rest_articles = 0;
  for (const auto& [mid, ids] : by_medium)
    if (!test_media_set.count(mid)) {
      rest.push_back(mid);
      rest_articles += ids.size();
    }
  rng.shuffle(rest);
  const double target = valid_fraction * static_cast<double>(rest_articles);
  std::size_t in_valid = 0;
  for (const std::string& mid : rest) {
    const std::size_t n = by_medium.at(mid).size();
    const double miss_now = std::fabs(static_cast<double>(in_valid) - target);
    const double miss_with = std::fabs(static_cast<double>(in_valid + n) - target);
    const bool to_valid = miss_with < miss_now;
    for (const std::string& id : by_medium.at(mid))
      split.assignment.emplace(id, to_valid ? Subset::Valid : Subset::Train);
    if (to_valid) in_valid += n;
  }
  return split;
}

// ---------------------------------------------------------------------------
// Random split: identical test set; the paired split's exclusions rejoin the
// pool; Train/Valid drawn by per-label stratified sampling.

inline SplitAssignment random_split(const Corpus& corpus, const SplitAssignment& paired,
                                    double valid_fraction, std::uint64_t seed) {
  if (paired.kind != SplitKind::MediaBased)
    throw ValidationError("random_split: paired split must be media-based");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0))
    throw ValidationError("random_split: valid_fraction must lie in (0, 1)");
  for (const auto& [id, sub] : paired.assignment)
    if (!corpus.by_id.count(id))
      throw ValidationError("random_split: paired split references unknown article \"" + id + "\"");
  for (const std::string& id : paired.excluded_ids)
    if (!corpus.by_id.count(id))
      throw ValidationError("random_split: paired split references unknown article \"" + id + "\"");

  SplitAssignment split;
  split.kind = SplitKind::Random;
  split.seed = seed;
  split.test_media = paired.test_media;

  std::set<std::string> test_ids;
  for (const auto& [id, sub] : paired.assignment)
    if (sub == Subset::Test) {
      split.assignment.emplace(id, Subset::Test);
      test_ids.insert(id);
    }
  if (test_ids.empty()) throw ValidationError("random_split: paired split has an empty test set");

  // Pool = everything outside the shared test set, bucketed by label.
  std::vector<std::vector<std::string>> by_label(3);
  std::size_t pool_size = 0;
  for (const Article& a : corpus.articles)
    if (!test_ids.count(a.id)) {
      by_label[static_cast<std::size_t>(ordinal(a.label))].push_back(a.id);
      ++pool_size;
    }

  // Largest-remainder allocation of the Valid quota across labels.
  const auto total_valid =
      static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(pool_size)));
  std::array<std::size_t, 3> quota{};
  std::vector<std::pair<double, std::size_t>> rema;  // (-remainder, class) for stable sort
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double exact = valid_fraction * static_cast<double>(by_label[c].size());
    quota[c] = static_cast<std::size_t>(exact);  // floor
    assigned += quota[c];
    rema.emplace_back(-(exact - static_cast<double>(quota[c])), c);
  }
  std::sort(rema.begin(), rema.end());
  for (std::size_t k = 0; assigned < total_valid && k < rema.size(); ++k) {
    const std::size_t c = rema[k].second;
    if (quota[c] < by_label[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  for (std::size_t c = 0; c < 3; ++c) {
    auto& ids = by_label[c];
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
      split.assignment.emplace(ids[i], i < quota[c] ? Subset::Valid : Subset::Train);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Leakage verification.

struct VerificationReport {
  struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
  };
  std::vector<Check> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) arr.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    return {{"checks", arr}, {"all_pass", all_pass()}};
  }

  std::string to_table() const {
    TextTable t;
    t.header({"check", "result", "detail"});
    for (const auto& c : checks) t.row({c.name, c.pass ? "pass" : "FAIL", c.detail});
    return t.to_string();
  }
};

inline VerificationReport verify_splits(const Corpus& corpus, const SplitAssignment& media_based,
                                        const SplitAssignment& random) {
  VerificationReport rep;
  auto add = [&rep](const std::string& name, bool pass, const std::string& detail) {
    rep.checks.push_back({name, pass, detail});
  };

  // (a) The two splits share one test set, id for id.
  {
    const auto a = media_based.ids_of(Subset::Test);
    const auto b = random.ids_of(Subset::Test);
    std::vector<std::string> diff;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    add("shared_test_identity", diff.empty() && !a.empty(),
        diff.empty() ? (a.empty() ? "test set is empty" : std::to_string(a.size()) + " shared test articles")
                     : std::to_string(diff.size()) + " ids differ, e.g. \"" + diff.front() + "\"");
  }

  // (b) Media-based: no medium straddles Train/Valid/Test.
  {
    std::map<std::string, std::set<Subset>> media_sets;
    for (const auto& [id, sub] : media_based.assignment) {
      auto it = corpus.by_id.find(id);
      if (it != corpus.by_id.end()) media_sets[corpus.articles[it->second].medium_id].insert(sub);
    }
    std::string offender;
    for (const auto& [mid, subs] : media_sets)
      if (subs.size() > 1) {
        offender = mid;
        break;
      }
    add("media_disjoint", offender.empty(),
        offender.empty() ? std::to_string(media_sets.size()) + " media, each in exactly one set"
                         : "medium \"" + offender + "\" appears in more than one set");
  }

  // (c) Excluded articles vanish from the media-based split entirely.
  {
    std::string leaked;
    for (const std::string& id : media_based.excluded_ids)
      if (media_based.assignment.count(id)) {
        leaked = id;
        break;
      }
    add("excluded_absent_media_based", leaked.empty(),
        leaked.empty() ? std::to_string(media_based.excluded_ids.size()) + " excluded ids, none assigned"
                       : "excluded article \"" + leaked + "\" is also assigned");
  }

  // (d) The random split recovers every excluded article into Train or Valid.
  {
    std::string missing;
    for (const std::string& id : media_based.excluded_ids) {
      auto it = random.assignment.find(id);
      if (it == random.assignment.end() || it->second == Subset::Test) {
        missing = id;
        break;
      }
    }
    add("excluded_recovered_random", missing.empty(),
        missing.empty() ? "all excluded ids return to the random split's train/valid"
                        : "excluded article \"" + missing + "\" is not in random train/valid");
  }

  // (e) Partition completeness for both splits.
  {
    std::string detail;
    bool ok = true;
    std::set<std::string> mb_ids;
    for (const auto& [id, sub] : media_based.assignment) mb_ids.insert(id);
    for (const std::string& id : media_based.excluded_ids)
      if (!mb_ids.insert(id).second) {
        ok = false;
        detail = "media-based: \"" + id + "\" both assigned and excluded";
        break;
      }
    if (ok && mb_ids.size() != corpus.articles.size()) {
      ok = false;
      detail = "media-based covers " + std::to_string(mb_ids.size()) + " of " +
               std::to_string(corpus.articles.size()) + " articles";
    }
    if (ok && random.assignment.size() != corpus.articles.size()) {
      ok = false;
      detail = "random covers " + std::to_string(random.assignment.size()) + " of " +
               std::to_string(corpus.articles.size()) + " articles";
    }
    if (ok)
      for (const auto& [id, sub] : media_based.assignment)
        if (!corpus.by_id.count(id)) {
          ok = false;
          detail = "media-based assigns unknown article \"" + id + "\"";
          break;
        }
    if (ok)
      for (const auto& [id, sub] : random.assignment)
        if (!corpus.by_id.count(id)) {
          ok = false;
          detail = "random assigns unknown article \"" + id + "\"";
          break;
        }
    add("partition_complete", ok, ok ? "both splits partition the corpus" : detail);
  }
  return rep;
}

}  // namespace debias
