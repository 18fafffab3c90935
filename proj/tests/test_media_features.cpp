#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "debias/media_features.hpp"

using namespace debias;

namespace {

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("average_vectors hand values") {
  REQUIRE(average_vectors({{1.0, 0.0}, {0.0, 1.0}}) == std::vector<double>{0.5, 0.5});
  const std::vector<double> v{3.0, -2.0, 0.25};
  REQUIRE(average_vectors({v}) == v);
}

TEST_CASE("average_vectors over 1000 copies stays within 1e-12 of the original") {
  const std::vector<double> v{0.1, -7.3, 2.25, 1e-9};
  std::vector<std::vector<double>> copies(1000, v);
  const auto avg = average_vectors(copies);
  for (std::size_t k = 0; k < v.size(); ++k) REQUIRE(std::fabs(avg[k] - v[k]) <= 1e-12);
}

TEST_CASE("average_vectors is permutation-invariant") {
  std::vector<std::vector<double>> vs{{1.0, 2.0}, {-4.0, 0.5}, {3.25, 3.25}};
  const auto forward = average_vectors(vs);
  std::reverse(vs.begin(), vs.end());
  REQUIRE(average_vectors(vs) == forward);
}

TEST_CASE("average_vectors input validation") {
  REQUIRE_THROWS_AS(average_vectors({}), ValidationError);
  try {
    average_vectors({{1.0, 2.0}, {1.0}});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("vector 0") != std::string::npos);
    REQUIRE(msg.find("vector 1") != std::string::npos);
  }
}

TEST_CASE("hash_embed_text is deterministic, unit-norm, and seed-sensitive") {
  const auto a = hash_embed_text("The polls opened early across the state.", 32, 9);
  const auto b = hash_embed_text("The polls opened early across the state.", 32, 9);
  const auto c = hash_embed_text("The polls opened early across the state.", 32, 10);
  REQUIRE(a == b);
  REQUIRE(a != c);
  REQUIRE(std::fabs(l2(a) - 1.0) <= 1e-9);
  REQUIRE(std::fabs(l2(c) - 1.0) <= 1e-9);
  REQUIRE(a.size() == 32);
}

TEST_CASE("hash_embed_text maps empty text to the zero vector") {
  REQUIRE(hash_embed_text("", 16, 1) == std::vector<double>(16, 0.0));
  REQUIRE(hash_embed_text("   \t\n", 16, 1) == std::vector<double>(16, 0.0));
  REQUIRE_THROWS_AS(hash_embed_text("x", 0, 1), ValidationError);
}

TEST_CASE("media-vector files parse, filter by feature, and round-trip") {
  const std::string content =
      "{\"medium\": \"m1\", \"feature\": \"wikipedia\", \"vector\": [1.0, 2.0]}\n"
      "{\"medium\": \"m2\", \"feature\": \"wikipedia\", \"vector\": [0.5, -1.0]}\n"
      "{\"medium\": \"m3\", \"feature\": \"twitter_bios\", \"vector\": [9.0, 9.0, 9.0]}\n";
  const MediaVectorMap wiki = parse_media_vectors_jsonl(content, "wikipedia");
  REQUIRE(wiki.size() == 2);
  REQUIRE(vector_width(wiki) == 2);
  REQUIRE(wiki.at("m1").vector == std::vector<double>{1.0, 2.0});
  REQUIRE(wiki.at("m1").provenance == FeatureProvenance::Precomputed);
  const MediaVectorMap bios = parse_media_vectors_jsonl(content, "twitter_bios");
  REQUIRE(bios.size() == 1);
  REQUIRE(vector_width(bios) == 3);

  const auto path = std::filesystem::temp_directory_path() / "media_vectors_roundtrip.jsonl";
  save_media_vectors(wiki, path);
  const MediaVectorMap back = load_media_vectors(path, "wikipedia");
  REQUIRE(media_vectors_to_jsonl(back) == media_vectors_to_jsonl(wiki));
  std::filesystem::remove(path);
}

TEST_CASE("media-vector width mismatch names both rows") {
  const std::string content =
      "{\"medium\": \"alpha\", \"feature\": \"f\", \"vector\": [1,2,3,4,5,6,7,8]}\n"
      "{\"medium\": \"beta\", \"feature\": \"f\", \"vector\": [1,2,3,4,5,6,7]}\n";
  try {
    parse_media_vectors_jsonl(content, "f");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("alpha") != std::string::npos);
    REQUIRE(msg.find("beta") != std::string::npos);
    REQUIRE(msg.find("8") != std::string::npos);
    REQUIRE(msg.find("7") != std::string::npos);
  }
}

TEST_CASE("media-vector parsing rejects non-finite entries and duplicates") {
  REQUIRE_THROWS_AS(parse_media_vectors_jsonl(
                        "{\"medium\": \"m\", \"feature\": \"f\", \"vector\": [1, null]}\n", "f"),
                    ValidationError);
  REQUIRE_THROWS_AS(
      parse_media_vectors_jsonl("{\"medium\": \"m\", \"feature\": \"f\", \"vector\": [1]}\n"
                                "{\"medium\": \"m\", \"feature\": \"f\", \"vector\": [2]}\n",
                                "f"),
      ValidationError);
  REQUIRE_THROWS_AS(parse_media_vectors_jsonl("{\"medium\": \"m\"}\n", "f"), ValidationError);
  REQUIRE_THROWS_AS(parse_media_vectors_jsonl("nope\n", "f"), ValidationError);
}

TEST_CASE("bios files encode to one averaged unit-scale vector per medium") {
  const auto path = std::filesystem::temp_directory_path() / "bios_test.jsonl";
  write_file(path,
             "{\"medium\": \"m1\", \"bios\": [\"political reporter\", \"likes dogs\"]}\n"
             "{\"medium\": \"m2\", \"bios\": [\"sports fan\"]}\n");
    const auto bios = load_bios(path);
  REQUIRE(bios.at("m1").size() == 2);
  const MediaVectorMap mv = media_vectors_from_bios(bios, "twitter_bios", 24, 5);
  REQUIRE(mv.size() == 2);
  REQUIRE(mv.at("m1").provenance == FeatureProvenance::Averaged);
  // m1's vector is exactly the mean of the two bio encodings.
  const auto e1 = hash_embed_text("political reporter", 24, 5);
  const auto e2 = hash_embed_text("likes dogs", 24, 5);
  REQUIRE(mv.at("m1").vector == average_vectors({e1, e2}));
  // m2 holds a single bio, so its centroid is the unit encoding itself.
  REQUIRE(std::fabs(l2(mv.at("m2").vector) - 1.0) <= 1e-9);
  std::filesystem::remove(path);

  REQUIRE_THROWS_AS(media_vectors_from_bios({{"m", {}}}, "f", 8, 1), ValidationError);
}

TEST_CASE("corpus-derived fallback vectors cover every medium") {
  SynthSpec spec;
  spec.n_media = 4;
  spec.articles_per_medium = 5;
  Corpus c = synth_corpus(spec, 11);
  const MediaVectorMap mv = media_vectors_from_corpus(c, "custom:text", 16, 2);
  REQUIRE(mv.size() == 4);
  for (const auto& [id, v] : mv) {
    REQUIRE(v.vector.size() == 16);
    REQUIRE(v.provenance == FeatureProvenance::HashFallback);
  }
  const auto missing = attach_media_vectors(c, mv, "custom:text");
  REQUIRE(missing.empty());
  REQUIRE(c.media.begin()->second.features.at("custom:text").size() == 16);
}

TEST_CASE("attach_media_vectors reports uncovered media") {
  SynthSpec spec;
  spec.n_media = 3;
  spec.articles_per_medium = 4;
  Corpus c = synth_corpus(spec, 11);
  MediaVectorMap mv = media_vectors_from_corpus(c, "f", 8, 2);
  mv.erase("m01");
  const auto missing = attach_media_vectors(c, mv, "f");
  REQUIRE(missing == std::vector<std::string>{"m01"});
}
