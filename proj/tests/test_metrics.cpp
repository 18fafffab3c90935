#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "debias/metrics.hpp"

using namespace debias;

namespace {

// Brute-force oracle: assembles per-class tallies by direct counting over the
// label vector, then applies the same percentage formulas. Independent of the
// confusion-matrix bookkeeping inside compute_metrics.
struct OracleResult {
  double accuracy, macro_f1, mae;
};

OracleResult oracle_metrics(const std::vector<int>& y, const std::vector<int>& p, int k) {
  std::size_t correct = 0;
  long long abs_sum = 0;
  OracleResult r{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == p[i]) ++correct;
    abs_sum += std::llabs(static_cast<long long>(y[i]) - p[i]);
  }
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(y.size());
  r.mae = static_cast<double>(abs_sum) / static_cast<double>(y.size());
  double f1_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (p[i] == c && y[i] == c) ++tp;
      if (p[i] == c && y[i] != c) ++fp;
      if (p[i] != c && y[i] == c) ++fn;
    }
    const long long denom = 2 * tp + fp + fn;
    f1_sum += denom ? 200.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
  }
  r.macro_f1 = f1_sum / k;
  return r;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TEST_CASE("perfect predictions score 100 accuracy, 100 macro-F1, 0 MAE") {
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  const MetricsReport r = compute_metrics(y, y, 3);
  REQUIRE(r.accuracy == 100.0);
  REQUIRE(r.macro_f1 == 100.0);
  REQUIRE(r.mae == 0.0);
  REQUIRE(r.n == 6);
}

TEST_CASE("balanced truth, all predictions one class: macro-F1 rounds to 16.67") {
  // One class gets F1 = 2*(1/3)*1 / (1/3 + 1) = 0.5 -> 50%; other two get 0.
  std::vector<int> y, p;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10; ++i) {
      y.push_back(c);
      p.push_back(0);
    }
  const MetricsReport r = compute_metrics(y, p, 3);
  REQUIRE(round2(r.macro_f1) == 16.67);
  REQUIRE(r.macro_f1 == 50.0 / 3.0);
  REQUIRE(round2(r.accuracy) == 33.33);
}

TEST_CASE("majority-class row: left 404, center 296, right 500, predict all right") {
  std::vector<int> y, p;
  for (int i = 0; i < 404; ++i) y.push_back(0);
  for (int i = 0; i < 296; ++i) y.push_back(1);
  for (int i = 0; i < 500; ++i) y.push_back(2);
  p.assign(y.size(), 2);
  const MetricsReport r = compute_metrics(y, p, 3);
  REQUIRE(round2(r.macro_f1) == 19.61);
  REQUIRE(round2(r.accuracy) == 41.67);
  REQUIRE(round2(r.mae) == 0.92);
  // Independent closed forms: F1(right) = 2*500 / (2*500 + 700); others 0.
  REQUIRE(r.macro_f1 == (200.0 * 500.0 / (2 * 500 + 404 + 296)) / 3.0);
  REQUIRE(r.accuracy == 100.0 * 500.0 / 1200.0);
  REQUIRE(r.mae == (404.0 * 2 + 296.0 * 1) / 1200.0);
}

TEST_CASE("mae hand values and properties") {
  REQUIRE(mae({0, 1, 2}, {1, 1, 1}) == 2.0 / 3.0);
  REQUIRE(mae({0, 0, 0}, {2, 2, 2}) == 2.0);
  REQUIRE(mae({2, 1, 0}, {2, 1, 0}) == 0.0);
  // Symmetry over random vectors, and the ordinal bound mae <= 2.
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a, b;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(rng.below(3)));
      b.push_back(static_cast<int>(rng.below(3)));
    }
    REQUIRE(mae(a, b) == mae(b, a));
    REQUIRE(mae(a, b) <= 2.0);
    REQUIRE(mae(a, b) >= 0.0);
  }
}

TEST_CASE("compute_metrics matches the brute-force oracle on random vectors") {
  Rng rng(8181);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> y, p;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
      p.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
    }
    const MetricsReport r = compute_metrics(y, p, k);
    const OracleResult o = oracle_metrics(y, p, k);
    REQUIRE(r.accuracy == o.accuracy);  // identical integer tallies -> bit-exact
    REQUIRE(r.macro_f1 == o.macro_f1);
    REQUIRE(r.mae == o.mae);
    REQUIRE(r.macro_f1 >= 0.0);
    REQUIRE(r.macro_f1 <= 100.0);
  }
}

TEST_CASE("confusion matrix and per-class entries are consistent") {
  const std::vector<int> y{0, 0, 1, 1, 2, 2, 2};
  const std::vector<int> p{0, 1, 1, 1, 0, 2, 2};
  const MetricsReport r = compute_metrics(y, p, 3);
  REQUIRE(r.confusion[0][0] == 1);
  REQUIRE(r.confusion[0][1] == 1);
  REQUIRE(r.confusion[2][0] == 1);
  REQUIRE(r.confusion[2][2] == 2);
  long long total = 0;
  for (const auto& row : r.confusion)
    for (long long cell : row) total += cell;
  REQUIRE(total == static_cast<long long>(y.size()));
  REQUIRE(r.per_class.size() == 3);
  // Class 1: tp=2, fp=1, fn=0 -> precision 66.67, recall 100.
  REQUIRE(round2(r.per_class[1].precision) == 66.67);
  REQUIRE(r.per_class[1].recall == 100.0);
}

TEST_CASE("compute_metrics input validation") {
  REQUIRE_THROWS_AS(compute_metrics({}, {}, 3), ValidationError);
  REQUIRE_THROWS_AS(compute_metrics({0, 1}, {0}, 3), ValidationError);
  REQUIRE_THROWS_AS(compute_metrics({0, 3}, {0, 1}, 3), ValidationError);
  REQUIRE_THROWS_AS(compute_metrics({0, -1}, {0, 1}, 3), ValidationError);
  REQUIRE_THROWS_AS(compute_metrics({0, 1}, {0, 5}, 3), ValidationError);
  REQUIRE_THROWS_AS(compute_metrics({0}, {0}, 1), ValidationError);
  REQUIRE_THROWS_AS(mae({0, 1}, {0}), ValidationError);
  REQUIRE_THROWS_AS(macro_f1({0, 4}, {0, 0}), ValidationError);
}

TEST_CASE("metrics report serializes with stable fields") {
  const MetricsReport r = compute_metrics({0, 1, 2}, {0, 1, 1}, 3);
  const nlohmann::json j = r.to_json();
  REQUIRE(j.at("n") == 3);
  REQUIRE(j.at("accuracy").get<double>() == r.accuracy);
  REQUIRE(j.at("macro_f1").get<double>() == r.macro_f1);
  REQUIRE(j.at("mae").get<double>() == r.mae);
  REQUIRE(j.at("confusion").size() == 3);
  REQUIRE(j.at("per_class").size() == 3);
}

TEST_CASE("early stopping: plateau counts as no improvement") {
  const EarlyStopDecision d = early_stopping_check({50.0, 51.0, 51.0, 51.0}, 2);
  REQUIRE(d.stop);
  REQUIRE(d.best_epoch == 2);
}

TEST_CASE("early stopping: short and improving histories continue") {
  REQUIRE_FALSE(early_stopping_check({60.0}, 3).stop);
  REQUIRE(early_stopping_check({60.0}, 3).best_epoch == 1);
  const EarlyStopDecision rising = early_stopping_check({10.0, 20.0, 30.0, 40.0}, 2);
  REQUIRE_FALSE(rising.stop);
  REQUIRE(rising.best_epoch == 4);
  // Exactly at the patience boundary.
  REQUIRE_FALSE(early_stopping_check({50.0, 40.0}, 2).stop);
  REQUIRE(early_stopping_check({50.0, 40.0, 30.0}, 2).stop);
  REQUIRE(early_stopping_check({50.0, 40.0, 30.0}, 2).best_epoch == 1);
}

TEST_CASE("early stopping input validation") {
  REQUIRE_THROWS_AS(early_stopping_check({}, 2), ValidationError);
  REQUIRE_THROWS_AS(early_stopping_check({50.0}, 0), ValidationError);
}
