#pragma once

// Triplet mining and validation. A triplet shares one topic across all three
// members; the positive matches the anchor's ideology from a different medium;
// the negative contradicts the ideology from the anchor's own medium (or from
// any other medium when relaxed fallback is allowed).

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/splits.hpp"

namespace debias {

struct Triplet {
  std::string anchor_id;
  std::string positive_id;
  std::string negative_id;
  std::string topic;
  bool relaxed = false;

  nlohmann::json to_json() const {
    return {{"anchor", anchor_id}, {"positive", positive_id}, {"negative", negative_id},
            {"topic", topic},      {"relaxed", relaxed}};
  }

  static Triplet from_json(const nlohmann::json& j) {
    Triplet t;
    try {
      t.anchor_id = j.at("anchor").get<std::string>();
      t.positive_id = j.at("positive").get<std::string>();
      t.negative_id = j.at("negative").get<std::string>();
      t.topic = j.at("topic").get<std::string>();
      t.relaxed = j.at("relaxed").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed triplet JSON: ") + e.what());
    }
    return t;
  }
};

// Named constraint violations; empty list means the triplet is valid. When a
// split is supplied, membership in its Train set is checked as well.
inline std::vector<std::string> validate_triplet(const Corpus& corpus, const Triplet& t,
                                                 const SplitAssignment* split = nullptr) {
  const Article& a = corpus.article(t.anchor_id);  // throws on unresolved ids
  const Article& p = corpus.article(t.positive_id);
  const Article& n = corpus.article(t.negative_id);

  std::vector<std::string> violations;
  if (t.anchor_id == t.positive_id || t.anchor_id == t.negative_id || t.positive_id == t.negative_id)
    violations.push_back("ids not distinct");
  if (p.label != a.label) violations.push_back("positive label differs from anchor");
  if (p.medium_id == a.medium_id) violations.push_back("positive shares anchor medium");
  if (n.label == a.label) violations.push_back("negative shares anchor label");
  if (!t.relaxed && n.medium_id != a.medium_id)
    violations.push_back("negative medium differs from anchor medium");

  const std::set<std::string> at(a.topics.begin(), a.topics.end());
  const bool topic_shared = at.count(t.topic) &&
                            std::count(p.topics.begin(), p.topics.end(), t.topic) &&
                            std::count(n.topics.begin(), n.topics.end(), t.topic);
  if (!topic_shared) violations.push_back("no shared topic");

  if (split) {
    for (const std::string* id : {&t.anchor_id, &t.positive_id, &t.negative_id}) {
      auto it = split->assignment.find(*id);
      if (it == split->assignment.end() || it->second != Subset::Train) {
        violations.push_back("member outside train set");
        break;
      }
    }
  }
  return violations;
}

// ---------------------------------------------------------------------------
// Mining: sample without replacement over feasible (anchor, topic) pairs.

inline std::vector<Triplet> mine_triplets(const Corpus& corpus, const SplitAssignment& split,
                                          std::size_t n, std::uint64_t seed, bool allow_relaxed) {
  std::vector<std::size_t> train_idx;
  for (const auto& [id, sub] : split.assignment)
    if (sub == Subset::Train) train_idx.push_back(corpus.by_id.at(id));
  if (train_idx.empty()) throw ValidationError("mine_triplets: split has an empty train set");

  // Topic buckets over train articles only.
  std::map<std::string, std::vector<std::size_t>> by_topic;
  for (std::size_t idx : train_idx)
    for (const std::string& t : corpus.articles[idx].topics) by_topic[t].push_back(idx);

  struct Pair {
    std::size_t anchor;
    const std::string* topic;
  };
  std::vector<Pair> feasible;
  std::size_t anchors_without_positive = 0, anchors_without_strict = 0, anchors_without_any = 0;

  std::set<std::size_t> saw_positive, saw_strict, saw_any;
  for (std::size_t idx : train_idx) {
    const Article& a = corpus.articles[idx];
    for (const std::string& topic : a.topics) {
      const auto& bucket = by_topic.at(topic);
      bool has_pos = false, has_strict = false, has_relaxed = false;
      for (std::size_t other : bucket) {
        if (other == idx) continue;
        const Article& o = corpus.articles[other];
        if (o.label == a.label && o.medium_id != a.medium_id) has_pos = true;
        if (o.label != a.label && o.medium_id == a.medium_id) has_strict = true;
        if (o.label != a.label && o.medium_id != a.medium_id) has_relaxed = true;
        if (has_pos && has_strict) break;
      }
      const bool has_neg = has_strict || (allow_relaxed && has_relaxed);
      if (has_pos) saw_positive.insert(idx);
      if (has_strict) saw_strict.insert(idx);
      if (has_pos && has_neg) {
        feasible.push_back({idx, &topic});
        saw_any.insert(idx);
      }
    }
  }
  anchors_without_positive = train_idx.size() - saw_positive.size();
  anchors_without_strict = train_idx.size() - saw_strict.size();
  anchors_without_any = train_idx.size() - saw_any.size();

  if (feasible.empty()) {
    std::ostringstream msg;
    msg << "mine_triplets: no feasible triplets in " << train_idx.size() << " train articles: "
        << anchors_without_positive << " anchors lack a same-label/different-medium positive with a shared topic, "
        << anchors_without_strict << " lack a strict same-medium/different-label negative";
    if (!allow_relaxed) msg << " (relaxed negatives disabled)";
    throw ValidationError(msg.str());
  }

  Rng rng(seed);
  rng.shuffle(feasible);
  const std::size_t want = std::min(n, feasible.size());

  std::set<std::array<std::string, 3>> emitted;  // reject duplicate id-triples
  std::vector<Triplet> out;
  out.reserve(want);
  for (const Pair& pr : feasible) {
    if (out.size() >= want) break;
    const Article& a = corpus.articles[pr.anchor];
    const std::string& topic = *pr.topic;
    std::vector<std::size_t> positives, strict_negs, relaxed_negs;
    for (std::size_t other : by_topic.at(topic)) {
      if (other == pr.anchor) continue;
      const Article& o = corpus.articles[other];
      if (o.label == a.label && o.medium_id != a.medium_id) positives.push_back(other);
      if (o.label != a.label && o.medium_id == a.medium_id) strict_negs.push_back(other);
      if (o.label != a.label && o.medium_id != a.medium_id) relaxed_negs.push_back(other);
    }
    const bool use_strict = !strict_negs.empty();
    const auto& negs = use_strict ? strict_negs : relaxed_negs;
    if (positives.empty() || negs.empty()) continue;  // cannot happen for feasible pairs

    Triplet t;
    t.anchor_id = a.id;
    t.topic = topic;
    t.relaxed = !use_strict;
    bool placed = false;
    for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
      t.positive_id = corpus.articles[positives[rng.below(positives.size())]].id;
      t.negative_id = corpus.articles[negs[rng.below(negs.size())]].id;
      placed = emitted.insert({t.anchor_id, t.positive_id, t.negative_id}).second;
    }
    if (placed) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line.

inline std::string triplets_to_jsonl(const std::vector<Triplet>& ts) {
  std::ostringstream out;
  for (const Triplet& t : ts) out << t.to_json().dump() << '\n';
  return out.str();
}

inline void save_triplets(const std::vector<Triplet>& ts, const std::filesystem::path& path) {
  write_file(path, triplets_to_jsonl(ts));
}

inline std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Triplet::from_json(nlohmann::json::parse(line)));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
  }
  return out;
}

}  // namespace debias
