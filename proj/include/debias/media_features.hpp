#pragma once

// Media-level feature vectors: load precomputed vectors, average encodings
// (e.g. follower bios), and provide a deterministic hash embedding so the
// pipeline runs without any external encoder.

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"

namespace debias {

enum class FeatureProvenance { Precomputed, Averaged, HashFallback };

inline const char* to_string(FeatureProvenance p) {
  switch (p) {
    case FeatureProvenance::Precomputed: return "precomputed";
    case FeatureProvenance::Averaged: return "averaged";
    case FeatureProvenance::HashFallback: return "hash_fallback";
  }
  return "?";
}

struct MediaVector {
  std::string medium_id;
  std::string feature_name;
  std::vector<double> vector;
  FeatureProvenance provenance = FeatureProvenance::Precomputed;
};

using MediaVectorMap = std::map<std::string, MediaVector>;

inline std::size_t vector_width(const MediaVectorMap& m) {
  return m.empty() ? 0 : m.begin()->second.vector.size();
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic mean.

inline std::vector<double> average_vectors(const std::vector<std::vector<double>>& vs) {
  if (vs.empty()) throw ValidationError("average_vectors: empty list");
  const std::size_t width = vs.front().size();
  std::vector<double> sum(width, 0.0);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].size() != width)
      throw ValidationError("average_vectors: vector 0 has width " + std::to_string(width) +
                            " but vector " + std::to_string(i) + " has width " +
                            std::to_string(vs[i].size()));
    for (std::size_t k = 0; k < width; ++k) sum[k] += vs[i][k];
  }
  for (double& x : sum) x /= static_cast<double>(vs.size());
  return sum;
}

// ---------------------------------------------------------------------------
// Deterministic token-hashed signed projection, L2-normalized. Empty or
// token-free text maps to the zero vector (the only non-unit output).

inline std::vector<double> hash_embed_text(const std::string& text, std::size_t width,
                                           std::uint64_t seed) {
  if (width == 0) throw ValidationError("hash_embed_text: width must be positive");
  std::vector<double> v(width, 0.0);
  const std::uint64_t salt = fnv1a64_u64(seed);
  bool any = false;
  for (const std::string& tok : tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok, salt);
    const std::size_t bucket = static_cast<std::size_t>(h % width);
    v[bucket] += (h & (1ull << 63)) ? -1.0 : 1.0;
    any = true;
  }
  if (!any) return v;  // zero vector flags empty input
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// Media-vector files: JSONL {medium, feature, vector:[floats]}.

inline MediaVectorMap parse_media_vectors_jsonl(const std::string& content,
                                                const std::string& feature_name) {
  MediaVectorMap out;
  std::string first_row;  // row that fixed the width, for error messages
  std::size_t width = 0;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.contains("medium") || !j.contains("feature") || !j.contains("vector") ||
        !j.at("vector").is_array())
      throw ValidationError("line " + std::to_string(lineno) +
                            ": expected fields medium, feature, vector");
    if (j.at("feature").get<std::string>() != feature_name) continue;

    MediaVector mv;
    mv.medium_id = j.at("medium").get<std::string>();
    mv.feature_name = feature_name;
    mv.provenance = FeatureProvenance::Precomputed;
    for (const auto& x : j.at("vector")) {
      if (!x.is_number()) throw ValidationError("line " + std::to_string(lineno) + ": non-numeric vector entry");
      const double d = x.get<double>();
      if (!std::isfinite(d))
        throw ValidationError("line " + std::to_string(lineno) + ": non-finite vector entry for medium \"" +
                              mv.medium_id + "\"");
      mv.vector.push_back(d);
    }
    if (out.count(mv.medium_id))
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate medium \"" + mv.medium_id +
                            "\" for feature \"" + feature_name + "\"");
    if (width == 0 && first_row.empty()) {
      width = mv.vector.size();
      first_row = mv.medium_id + " (line " + std::to_string(lineno) + ")";
    } else if (mv.vector.size() != width) {
      throw ValidationError("width mismatch: medium " + first_row + " has width " + std::to_string(width) +
                            " but medium " + mv.medium_id + " (line " + std::to_string(lineno) +
                            ") has width " + std::to_string(mv.vector.size()));
    }
    out.emplace(mv.medium_id, std::move(mv));
  }
  return out;
}

inline MediaVectorMap load_media_vectors(const std::filesystem::path& path,
                                         const std::string& feature_name) {
  try {
    return parse_media_vectors_jsonl(read_file(path), feature_name);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string media_vectors_to_jsonl(const MediaVectorMap& m) {
  std::ostringstream out;
  for (const auto& [id, mv] : m) {
    nlohmann::json j{{"medium", id}, {"feature", mv.feature_name}, {"vector", mv.vector}};
    out << j.dump() << '\n';
  }
  return out.str();
}

inline void save_media_vectors(const MediaVectorMap& m, const std::filesystem::path& path) {
  write_file(path, media_vectors_to_jsonl(m));
}

// ---------------------------------------------------------------------------
// Bios files: JSONL {medium, bios:[strings]}. Each bio (up to a cap of 1,000
// per medium) is hash-embedded, then averaged into one vector per medium.

inline std::map<std::string, std::vector<std::string>> load_bios(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.contains("medium") || !j.contains("bios") || !j.at("bios").is_array())
      throw ValidationError(path.string() + " line " + std::to_string(lineno) +
                            ": expected fields medium, bios");
    const std::string id = j.at("medium").get<std::string>();
    if (out.count(id))
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": duplicate medium \"" + id + "\"");
    std::vector<std::string> bios;
    for (const auto& b : j.at("bios")) bios.push_back(b.get<std::string>());
    out.emplace(id, std::move(bios));
  }
  return out;
}

constexpr std::size_t kMaxBiosPerMedium = 1000;

inline MediaVectorMap media_vectors_from_bios(
    const std::map<std::string, std::vector<std::string>>& bios_by_medium,
    const std::string& feature_name, std::size_t width, std::uint64_t seed) {
  if (width == 0) throw ValidationError("media_vectors_from_bios: width must be positive");
  MediaVectorMap out;
  for (const auto& [id, bios] : bios_by_medium) {
    if (bios.empty()) throw ValidationError("medium \"" + id + "\" has no bios to encode");
    std::vector<std::vector<double>> encodings;
    for (std::size_t i = 0; i < bios.size() && i < kMaxBiosPerMedium; ++i)
      encodings.push_back(hash_embed_text(bios[i], width, seed));
    MediaVector mv;
    mv.medium_id = id;
    mv.feature_name = feature_name;
    mv.vector = average_vectors(encodings);
    mv.provenance = FeatureProvenance::Averaged;
    out.emplace(id, std::move(mv));
  }
  return out;
}

// Last-resort vectors built from each medium's own article text, so feature
// experiments can run with no external inputs at all.
inline MediaVectorMap media_vectors_from_corpus(const Corpus& corpus, const std::string& feature_name,
                                                std::size_t width, std::uint64_t seed) {
  if (width == 0) throw ValidationError("media_vectors_from_corpus: width must be positive");
  std::map<std::string, std::vector<std::vector<double>>> encodings;
  for (const Article& a : corpus.articles)
    encodings[a.medium_id].push_back(hash_embed_text(a.title + " " + a.body, width, seed));
  MediaVectorMap out;
  for (const auto& [id, vs] : encodings) {
    MediaVector mv;
    mv.medium_id = id;
    mv.feature_name = feature_name;
    mv.vector = average_vectors(vs);
    mv.provenance = FeatureProvenance::HashFallback;
    out.emplace(id, std::move(mv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attach vectors to the media registry. Returns the media in the corpus that
// the map does not cover, so callers can report rather than silently default.

inline std::vector<std::string> attach_media_vectors(Corpus& corpus, const MediaVectorMap& vectors,
                                                     const std::string& feature_name) {
  std::vector<std::string> missing;
  for (auto& [id, medium] : corpus.media) {
    auto it = vectors.find(id);
    if (it == vectors.end()) {
      missing.push_back(id);
      continue;
    }
    medium.features[feature_name] = it->second.vector;
  }
  return missing;
}

}  // namespace debias
