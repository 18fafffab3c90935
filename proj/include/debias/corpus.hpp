#pragma once

// Article corpora: JSONL ingestion with validation, marker-removal
// preprocessing, summary statistics, and a synthetic-corpus generator that
// plants controllable medium-style and ideology signals.

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/common.hpp"

namespace debias {

// ---------------------------------------------------------------------------
// Ideology: three ordinal classes, Left=0 < Center=1 < Right=2.

enum class Ideology : int { Left = 0, Center = 1, Right = 2 };

inline constexpr int kNumClasses = 3;

inline int ordinal(Ideology v) { return static_cast<int>(v); }

inline const char* to_string(Ideology v) {
  switch (v) {
    case Ideology::Left: return "left";
    case Ideology::Center: return "center";
    case Ideology::Right: return "right";
  }
  throw ValidationError("to_string: invalid ideology value");
}

inline Ideology parse_ideology(const std::string& s) {
  const std::string low = to_lower(s);
  if (low == "left") return Ideology::Left;
  if (low == "center") return Ideology::Center;
  if (low == "right") return Ideology::Right;
  throw ValidationError("unknown label \"" + s + "\" (expected left, center, or right)");
}

struct Article {
  std::string id;
  std::string title;
  std::string body;
  std::vector<std::string> topics;
  std::string medium_id;
  Ideology label = Ideology::Center;
  std::string date;                  // optional ISO-8601, empty if absent
  std::vector<std::string> authors;  // optional
};

struct Medium {
  std::string id;
  std::string name;
  Ideology majority_label = Ideology::Center;
  std::size_t article_count = 0;
  std::array<std::size_t, 3> label_counts = {0, 0, 0};
  std::map<std::string, std::vector<double>> features;  // feature-name -> vector
};

struct Corpus {
  std::vector<Article> articles;
  std::map<std::string, Medium> media;        // keyed by medium id
  std::set<std::string> topics;
  std::map<std::string, std::size_t> by_id;   // article id -> index in articles
  std::vector<std::string> warnings;          // non-fatal ingestion notes

  const Article& article(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("unknown article id \"" + id + "\"");
    return articles[it->second];
  }
};

// ---------------------------------------------------------------------------
// Preprocessing: strip a leading source preamble, replace explicit medium and
// author markers with neutral placeholders, normalize whitespace.

inline const std::string kMediumPlaceholder = "⟨MEDIUM⟩";  // ⟨MEDIUM⟩
inline const std::string kAuthorPlaceholder = "⟨AUTHOR⟩";  // ⟨AUTHOR⟩

namespace detail {

inline bool iequal_at(const std::string& s, std::size_t pos, const std::string& name) {
  if (pos + name.size() > s.size()) return false;
  for (std::size_t k = 0; k < name.size(); ++k)
    if (std::tolower(static_cast<unsigned char>(s[pos + k])) !=
        std::tolower(static_cast<unsigned char>(name[k])))
      return false;
  return true;
}

// A preamble is the medium name at the very start of the text, followed by a
// dash/pipe separator or a line break. Removed once; a bare mention that runs
// straight into other words is left for placeholder replacement instead.
inline std::string strip_preamble(const std::string& text, const std::string& medium_name) {
  if (medium_name.empty()) return text;
  std::size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  if (!iequal_at(text, i, medium_name)) return text;
  std::size_t j = i + medium_name.size();
  while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
  static const std::vector<std::string> seps = {"—", "–", "-", "|"};  // — – - |
  for (const auto& sep : seps)
    if (text.compare(j, sep.size(), sep) == 0) return text.substr(j + sep.size());
  if (j >= text.size()) return "";
  if (text[j] == '\n' || text[j] == '\r') return text.substr(j + 1);
  return text;
}

// Single left-to-right scan; existing placeholders are copied wholesale so a
// second pass is a no-op, and matches honor word boundaries in the source.
inline std::string replace_markers(const std::string& s,
                                   const std::vector<std::pair<std::string, std::string>>& repl) {
  const std::string* placeholders[] = {&kMediumPlaceholder, &kAuthorPlaceholder};
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  auto is_word = [](unsigned char c) { return std::isalnum(c) != 0; };
  while (i < s.size()) {
    bool copied = false;
    for (const std::string* ph : placeholders) {
      if (s.compare(i, ph->size(), *ph) == 0) {
        out += *ph;
        i += ph->size();
        copied = true;
        break;
      }
    }
    if (copied) continue;
    bool replaced = false;
    const bool left_ok = (i == 0) || !is_word(static_cast<unsigned char>(s[i - 1]));
    if (left_ok) {
      for (const auto& [name, ph] : repl) {
        if (name.empty() || !iequal_at(s, i, name)) continue;
        const std::size_t end = i + name.size();
        if (end < s.size() && is_word(static_cast<unsigned char>(s[end]))) continue;
        out += ph;
        i = end;
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      out.push_back(s[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace detail

inline std::string preprocess_text(const std::string& raw, const std::string& medium_name,
                                   const std::vector<std::string>& authors) {
  std::string s = detail::strip_preamble(raw, medium_name);
  std::vector<std::pair<std::string, std::string>> repl;
  if (!medium_name.empty()) repl.emplace_back(medium_name, kMediumPlaceholder);
  for (const std::string& a : authors)
    if (!a.empty()) repl.emplace_back(a, kAuthorPlaceholder);
  // Longest name first so "Fox News Channel" wins over "Fox News".
  std::stable_sort(repl.begin(), repl.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  s = detail::replace_markers(s, repl);
  return normalize_whitespace(s);
}

// ---------------------------------------------------------------------------
// Ingestion. One JSON object per line with fields id, title, body, topics,
// medium, label and optional date, authors.

namespace detail {

inline void rebuild_registries(Corpus& corpus) {
  corpus.media.clear();
  corpus.topics.clear();
  corpus.by_id.clear();
  for (std::size_t idx = 0; idx < corpus.articles.size(); ++idx) {
    const Article& a = corpus.articles[idx];
    corpus.by_id.emplace(a.id, idx);
    Medium& m = corpus.media[a.medium_id];
    m.id = a.medium_id;
    m.name = a.medium_id;
    ++m.article_count;
    ++m.label_counts[static_cast<std::size_t>(ordinal(a.label))];
    for (const std::string& t : a.topics) corpus.topics.insert(t);
  }
  for (auto& [id, m] : corpus.media) {
    // Modal label; ties break toward Center, then Left.
    const int order[3] = {1, 0, 2};
    int best = order[0];
    for (int c : order)
      if (m.label_counts[static_cast<std::size_t>(c)] > m.label_counts[static_cast<std::size_t>(best)]) best = c;
    m.majority_label = static_cast<Ideology>(best);
  }
}

}  // namespace detail

inline Corpus parse_corpus_jsonl(const std::string& content) {
  Corpus corpus;
  std::map<std::string, std::size_t> seen;  // id -> first line
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(where + ": record is not a JSON object");
    auto need = [&](const char* field) -> const nlohmann::json& {
      if (!obj.contains(field)) throw ValidationError(where + ": missing field \"" + field + "\"");
      return obj.at(field);
    };
    auto need_string = [&](const char* field) -> std::string {
      const auto& v = need(field);
      if (!v.is_string()) throw ValidationError(where + ": field \"" + field + "\" must be a string");
      return v.get<std::string>();
    };
    Article a;
    a.id = need_string("id");
    a.title = need_string("title");
    a.body = need_string("body");
    a.medium_id = need_string("medium");
    try {
      a.label = parse_ideology(need_string("label"));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    const auto& topics = need("topics");
    if (!topics.is_array() || topics.empty())
      throw ValidationError(where + ": field \"topics\" must be a non-empty array");
    for (const auto& t : topics) {
      if (!t.is_string()) throw ValidationError(where + ": field \"topics\" must contain strings");
      a.topics.push_back(t.get<std::string>());
    }
    if (obj.contains("date") && obj.at("date").is_string()) a.date = obj.at("date").get<std::string>();
    if (obj.contains("authors") && obj.at("authors").is_array())
      for (const auto& au : obj.at("authors"))
        if (au.is_string()) a.authors.push_back(au.get<std::string>());

    auto [it, fresh] = seen.emplace(a.id, lineno);
    if (!fresh)
      throw ValidationError(where + ": duplicate article id \"" + a.id + "\" (first seen on line " +
                            std::to_string(it->second) + ")");

    a.title = preprocess_text(a.title, a.medium_id, a.authors);
    a.body = preprocess_text(a.body, a.medium_id, a.authors);
    if (a.body.empty()) {
      corpus.warnings.push_back(where + ": dropping article \"" + a.id + "\": body empty after preprocessing");
      continue;
    }
    corpus.articles.push_back(std::move(a));
  }
  detail::rebuild_registries(corpus);
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, const std::string& format = "jsonl") {
  if (format != "jsonl") throw ValidationError("load_corpus: unsupported format \"" + format + "\"");
  if (!std::filesystem::exists(path)) throw ValidationError("load_corpus: no such file: " + path.string());
  try {
    return parse_corpus_jsonl(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::ostringstream out;
  for (const Article& a : corpus.articles) {
    nlohmann::json obj;
    obj["id"] = a.id;
    obj["title"] = a.title;
    obj["body"] = a.body;
    obj["topics"] = a.topics;
    obj["medium"] = a.medium_id;
    obj["label"] = to_string(a.label);
    if (!a.date.empty()) obj["date"] = a.date;
    if (!a.authors.empty()) obj["authors"] = a.authors;
    out << obj.dump() << '\n';
  }
  return out.str();
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, corpus_to_jsonl(corpus));
}

// ---------------------------------------------------------------------------
// Summary statistics.

struct StatsReport {
  std::size_t articles = 0;
  std::size_t media_count = 0;
  std::size_t topic_count = 0;
  std::array<std::size_t, 3> label_counts = {0, 0, 0};
  std::map<std::string, std::array<std::size_t, 3>> per_topic;
  std::size_t disagreeing = 0;  // articles whose label != their medium's majority
  double disagreement_rate = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["articles"] = articles;
    j["media"] = media_count;
    j["topics"] = topic_count;
    j["labels"] = {{"left", label_counts[0]}, {"center", label_counts[1]}, {"right", label_counts[2]}};
    nlohmann::json topics = nlohmann::json::object();
    for (const auto& [topic, counts] : per_topic)
      topics[topic] = {{"left", counts[0]}, {"center", counts[1]}, {"right", counts[2]}};
    j["per_topic"] = topics;
    j["disagreeing_articles"] = disagreeing;
    j["disagreement_rate"] = disagreement_rate;
    return j;
  }

  std::string to_table() const {
    TextTable t;
    t.header({"metric", "value"});
    t.row({"articles", std::to_string(articles)});
    t.row({"media", std::to_string(media_count)});
    t.row({"topics", std::to_string(topic_count)});
    t.row({"left", std::to_string(label_counts[0])});
    t.row({"center", std::to_string(label_counts[1])});
    t.row({"right", std::to_string(label_counts[2])});
    t.row({"label disagreement", std::to_string(disagreeing) + " (" +
                                     format_fixed(100.0 * disagreement_rate, 2) + "%)"});
    return t.to_string();
  }
};

inline StatsReport corpus_stats(const Corpus& corpus) {
  if (corpus.articles.empty()) throw ValidationError("corpus_stats: empty corpus");
  StatsReport r;
  r.articles = corpus.articles.size();
  r.media_count = corpus.media.size();
  r.topic_count = corpus.topics.size();
  for (const Article& a : corpus.articles) {
    const auto c = static_cast<std::size_t>(ordinal(a.label));
    ++r.label_counts[c];
    for (const std::string& t : a.topics) ++r.per_topic[t][c];
    if (a.label != corpus.media.at(a.medium_id).majority_label) ++r.disagreeing;
  }
  r.disagreement_rate = static_cast<double>(r.disagreeing) / static_cast<double>(r.articles);
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic corpora. Every body is a shuffled bag of four token families:
//   style    "sty{p}x{k}"  — shared by style pool p     (source signal)
//   ideology "ideo{c}x{k}" — shared by label class c    (task signal)
//   topic    "top{t}x{k}"  — shared by topic t
//   noise    "w{k}"        — shared by everyone
// Token shapes are alphanumeric-only so the tokenizer keeps them whole.
// style_strength / ideology_strength set the probability that a slot of that
// family actually emits its token rather than noise, so signal can be dialed
// from absent (0.0) to fully planted (1.0).
//
// style_pool_size groups consecutive media into shared style vocabularies
// (pool p = m / style_pool_size). At the default of 1 every medium writes in
// its own voice. At 2, media 2p and 2p+1 share a voice but lean different
// ways (majorities are m mod 3), so a classifier that reads voice as ideology
// inherits the *other* pool member's lean on media it never trained on —
// the style-transfer failure the media-based split is designed to expose.

struct SynthSpec {
  std::size_t n_media = 12;
  std::size_t articles_per_medium = 50;
  // P(article label = its medium's majority); the remainder splits evenly.
  // Medium m's majority label is m mod 3, so media cover all three classes.
  double dominant_prob = 0.7;
  std::size_t n_topics = 6;
  double multi_topic_prob = 0.25;  // chance of a second topic tag

  std::size_t style_slots = 6;
  std::size_t ideology_slots = 4;
  std::size_t topic_slots = 4;
  std::size_t noise_slots = 30;

  std::size_t style_vocab = 10;   // per style pool
  std::size_t ideology_vocab = 8; // per class
  std::size_t topic_vocab = 6;    // per topic
  std::size_t noise_vocab = 400;

  double style_strength = 1.0;
  double ideology_strength = 1.0;

  std::size_t style_pool_size = 1;  // media per shared style vocabulary
};

inline Corpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_media == 0) throw ValidationError("synth_corpus: n_media must be > 0");
  if (spec.articles_per_medium == 0) throw ValidationError("synth_corpus: articles_per_medium must be > 0");
  if (spec.n_topics == 0) throw ValidationError("synth_corpus: n_topics must be > 0");
  if (spec.noise_vocab == 0) throw ValidationError("synth_corpus: noise_vocab must be > 0");
  if (spec.style_pool_size == 0) throw ValidationError("synth_corpus: style_pool_size must be > 0");
  for (double p : {spec.dominant_prob, spec.multi_topic_prob, spec.style_strength, spec.ideology_strength})
    if (p < 0.0 || p > 1.0) throw ValidationError("synth_corpus: probabilities must lie in [0, 1]");

  Rng rng(seed);
  Corpus corpus;
  char buf[64];
  for (std::size_t m = 0; m < spec.n_media; ++m) {
    const int majority = static_cast<int>(m % 3);
    for (std::size_t i = 0; i < spec.articles_per_medium; ++i) {
      Article a;
      std::snprintf(buf, sizeof(buf), "m%02zua%04zu", m, i);
      a.id = buf;
      std::snprintf(buf, sizeof(buf), "m%02zu", m);
      a.medium_id = buf;

      // Label from the medium's own distribution.
      const double u = rng.unit();
      int label = majority;
      if (u >= spec.dominant_prob) {
        const double rest = (u - spec.dominant_prob) / (1.0 - spec.dominant_prob);
        label = (majority + (rest < 0.5 ? 1 : 2)) % 3;
      }
      a.label = static_cast<Ideology>(label);

      // One or two topic tags.
      std::vector<std::size_t> topic_ids = {rng.below(spec.n_topics)};
      if (spec.n_topics > 1 && rng.bernoulli(spec.multi_topic_prob)) {
        std::size_t second = rng.below(spec.n_topics - 1);
        if (second >= topic_ids[0]) ++second;
        topic_ids.push_back(second);
      }
      for (std::size_t t : topic_ids) {
        std::snprintf(buf, sizeof(buf), "topic%zu", t);
        a.topics.push_back(buf);
      }

      std::vector<std::string> tokens;
      auto noise_token = [&] {
        std::snprintf(buf, sizeof(buf), "w%zu", rng.below(spec.noise_vocab));
        return std::string(buf);
      };
      for (std::size_t k = 0; k < spec.style_slots; ++k) {
        if (spec.style_vocab > 0 && rng.bernoulli(spec.style_strength)) {
          std::snprintf(buf, sizeof(buf), "sty%zux%zu", m / spec.style_pool_size,
                        rng.below(spec.style_vocab));
          tokens.emplace_back(buf);
        } else {
          tokens.push_back(noise_token());
        }
      }
      for (std::size_t k = 0; k < spec.ideology_slots; ++k) {
        if (spec.ideology_vocab > 0 && rng.bernoulli(spec.ideology_strength)) {
          std::snprintf(buf, sizeof(buf), "ideo%dx%zu", label, rng.below(spec.ideology_vocab));
          tokens.emplace_back(buf);
        } else {
          tokens.push_back(noise_token());
        }
      }
      for (std::size_t k = 0; k < spec.topic_slots; ++k) {
        if (spec.topic_vocab > 0) {
          const std::size_t t = topic_ids[rng.below(topic_ids.size())];
          std::snprintf(buf, sizeof(buf), "top%zux%zu", t, rng.below(spec.topic_vocab));
          tokens.emplace_back(buf);
        }
      }
      for (std::size_t k = 0; k < spec.noise_slots; ++k) tokens.push_back(noise_token());
      rng.shuffle(tokens);

      std::string body;
      for (const std::string& tok : tokens) {
        if (!body.empty()) body.push_back(' ');
        body += tok;
      }
      a.body = body;
      // The title must not hint at the medium: the planted style tokens are
      // the only source of leakage the experiments control.
      std::snprintf(buf, sizeof(buf), "dispatch %zu", i);
      a.title = buf;
      std::snprintf(buf, sizeof(buf), "2020-%02d-%02d", static_cast<int>(m % 12) + 1,
                    static_cast<int>(i % 28) + 1);
      a.date = buf;
      corpus.articles.push_back(std::move(a));
    }
  }
  detail::rebuild_registries(corpus);
  return corpus;
}

}  // namespace debias
