#include <catch2/catch_amalgamated.hpp>

#include "debias/splits.hpp"

using namespace debias;

namespace {

Corpus ten_by_ten() {
  SynthSpec spec;
  spec.n_media = 10;
  spec.articles_per_medium = 10;
  return synth_corpus(spec, 5);
}

std::string labeled_line(const std::string& id, const std::string& medium, const std::string& label) {
  nlohmann::json j;
  j["id"] = id;
  j["title"] = "t";
  j["body"] = "body " + id;
  j["topics"] = {"economy"};
  j["medium"] = medium;
  j["label"] = label;
  return j.dump() + "\n";
}

const VerificationReport::Check& check_named(const VerificationReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::runtime_error("no check named " + name);
}

}  // namespace

TEST_CASE("media_based_split honors the documented counts") {
  Corpus c = ten_by_ten();
  SplitAssignment s = media_based_split(c, 2, 5, 0.2, 17);
  REQUIRE(s.kind == SplitKind::MediaBased);
  REQUIRE(s.count_of(Subset::Test) == 10);       // 2 media x 5 articles
  REQUIRE(s.excluded_ids.size() == 10);          // the test media's leftovers
  REQUIRE(s.count_of(Subset::Train) + s.count_of(Subset::Valid) == 80);
  REQUIRE(s.test_media.size() == 2);

  // Test articles come only from test media; train/valid never do.
  const std::set<std::string> tm(s.test_media.begin(), s.test_media.end());
  for (const auto& [id, sub] : s.assignment) {
    const bool from_test_medium = tm.count(c.article(id).medium_id) > 0;
    REQUIRE(from_test_medium == (sub == Subset::Test));
  }
  for (const std::string& id : s.excluded_ids) REQUIRE(tm.count(c.article(id).medium_id) == 1);
}

TEST_CASE("media_based_split is deterministic in the seed") {
  Corpus c = ten_by_ten();
  const std::string a = media_based_split(c, 2, 5, 0.2, 17).to_json().dump();
  const std::string b = media_based_split(c, 2, 5, 0.2, 17).to_json().dump();
  REQUIRE(a == b);
  REQUIRE(media_based_split(c, 2, 5, 0.2, 18).to_json().dump() != a);
}

TEST_CASE("media_based_split balances test-media majority labels") {
  SynthSpec spec;
  spec.n_media = 12;
  spec.articles_per_medium = 10;
  spec.dominant_prob = 1.0;  // majority label = medium index mod 3, exactly
  Corpus c = synth_corpus(spec, 9);
  SplitAssignment s = media_based_split(c, 6, 5, 0.2, 23);
  std::array<int, 3> per_class{};
  for (const std::string& mid : s.test_media)
    ++per_class[static_cast<std::size_t>(ordinal(c.media.at(mid).majority_label))];
  REQUIRE(per_class[0] == 2);
  REQUIRE(per_class[1] == 2);
  REQUIRE(per_class[2] == 2);
}

TEST_CASE("media_based_split rejects infeasible parameters") {
  Corpus c = ten_by_ten();
  REQUIRE_THROWS_AS(media_based_split(c, 10, 5, 0.2, 1), ValidationError);
  REQUIRE_THROWS_AS(media_based_split(c, 2, 5, 0.0, 1), ValidationError);
  try {
    media_based_split(c, 2, 11, 0.2, 1);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    // The error reports the largest feasible per_medium (10 here).
    REQUIRE(std::string(e.what()).find("10") != std::string::npos);
  }
}

TEST_CASE("random_split copies the test set and restratifies the rest") {
  Corpus c = ten_by_ten();
  SplitAssignment mb = media_based_split(c, 2, 5, 0.2, 17);
  SplitAssignment rnd = random_split(c, mb, 0.2, 99);
  REQUIRE(rnd.kind == SplitKind::Random);
  REQUIRE(rnd.ids_of(Subset::Test) == mb.ids_of(Subset::Test));
  REQUIRE(rnd.excluded_ids.empty());
  // Everything outside the shared test set is assigned.
  REQUIRE(rnd.assignment.size() == c.articles.size());
  for (const std::string& id : mb.excluded_ids) {
    auto it = rnd.assignment.find(id);
    REQUIRE(it != rnd.assignment.end());
    REQUIRE(it->second != Subset::Test);
  }
}

TEST_CASE("random_split stratifies valid counts by label") {
  // Pool after removing the 10 test articles: left 60, center 20, right 20.
  std::string content;
  for (int i = 0; i < 5; ++i) content += labeled_line("t1a" + std::to_string(i), "T1", "left");
  for (int i = 0; i < 5; ++i) content += labeled_line("t2a" + std::to_string(i), "T2", "right");
  for (int i = 0; i < 60; ++i) content += labeled_line("aa" + std::to_string(i), "A", "left");
  for (int i = 0; i < 20; ++i) content += labeled_line("bb" + std::to_string(i), "B", "center");
  for (int i = 0; i < 20; ++i) content += labeled_line("cc" + std::to_string(i), "C", "right");
  Corpus c = parse_corpus_jsonl(content);

  SplitAssignment paired;
  paired.kind = SplitKind::MediaBased;
  paired.seed = 1;
  paired.test_media = {"T1", "T2"};
  for (int i = 0; i < 5; ++i) {
    paired.assignment.emplace("t1a" + std::to_string(i), Subset::Test);
    paired.assignment.emplace("t2a" + std::to_string(i), Subset::Test);
  }

  SplitAssignment rnd = random_split(c, paired, 0.25, 7);
  std::array<std::size_t, 3> valid_counts{};
  for (const std::string& id : rnd.ids_of(Subset::Valid))
    ++valid_counts[static_cast<std::size_t>(ordinal(c.article(id).label))];
  REQUIRE(valid_counts[0] == 15);
  REQUIRE(valid_counts[1] == 5);
  REQUIRE(valid_counts[2] == 5);
}

TEST_CASE("random_split validates its inputs") {
  Corpus c = ten_by_ten();
  SplitAssignment mb = media_based_split(c, 2, 5, 0.2, 17);
  SplitAssignment rnd = random_split(c, mb, 0.2, 99);
  REQUIRE_THROWS_AS(random_split(c, rnd, 0.2, 1), ValidationError);  // not media-based

  SplitAssignment foreign = mb;
  foreign.assignment.emplace("no-such-article", Subset::Test);
  REQUIRE_THROWS_AS(random_split(c, foreign, 0.2, 1), ValidationError);
}

TEST_CASE("verify_splits passes on splits built by the two ops") {
  Corpus c = ten_by_ten();
  SplitAssignment mb = media_based_split(c, 2, 5, 0.2, 17);
  SplitAssignment rnd = random_split(c, mb, 0.2, 99);
  VerificationReport rep = verify_splits(c, mb, rnd);
  for (const auto& chk : rep.checks) INFO(chk.name << ": " << chk.detail);
  REQUIRE(rep.all_pass());
  REQUIRE(rep.checks.size() == 5);
}

TEST_CASE("verify_splits catches planted violations") {
  Corpus c = ten_by_ten();
  SplitAssignment mb = media_based_split(c, 2, 5, 0.2, 17);
  SplitAssignment rnd = random_split(c, mb, 0.2, 99);

  SECTION("deleted test article breaks shared-test identity") {
    SplitAssignment broken = rnd;
    broken.assignment.erase(broken.ids_of(Subset::Test).front());
    const VerificationReport rep = verify_splits(c, mb, broken);
    REQUIRE_FALSE(check_named(rep, "shared_test_identity").pass);
  }

  SECTION("train article moved to valid breaks media disjointness, naming the medium") {
    SplitAssignment broken = mb;
    const std::string train_id = broken.ids_of(Subset::Train).front();
    broken.assignment[train_id] = Subset::Valid;
    const VerificationReport rep = verify_splits(c, broken, rnd);
    const auto& chk = check_named(rep, "media_disjoint");
    REQUIRE_FALSE(chk.pass);
    REQUIRE(chk.detail.find(c.article(train_id).medium_id) != std::string::npos);
  }

  SECTION("excluded article assigned anyway is reported") {
    SplitAssignment broken = mb;
    broken.assignment[broken.excluded_ids.front()] = Subset::Train;
    const VerificationReport rep = verify_splits(c, broken, rnd);
    REQUIRE_FALSE(check_named(rep, "excluded_absent_media_based").pass);
  }

  SECTION("excluded article missing from the random split is reported") {
    SplitAssignment broken = rnd;
    broken.assignment.erase(mb.excluded_ids.front());
    const VerificationReport rep = verify_splits(c, mb, broken);
    REQUIRE_FALSE(check_named(rep, "excluded_recovered_random").pass);
  }
}

TEST_CASE("split JSON round-trips through save and load") {
  Corpus c = ten_by_ten();
  SplitAssignment mb = media_based_split(c, 2, 5, 0.2, 17);
  const auto path = std::filesystem::temp_directory_path() / "debias_test_split.json";
  save_split(mb, path);
  SplitAssignment back = load_split(path);
  REQUIRE(back.to_json().dump() == mb.to_json().dump());
  std::filesystem::remove(path);

  nlohmann::json bad = mb.to_json();
  bad["sets"]["valid"].push_back(bad["sets"]["train"][0]);
  REQUIRE_THROWS_AS(SplitAssignment::from_json(bad), ValidationError);
}
