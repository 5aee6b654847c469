#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kbforge/completion/completion.hpp"
#include "kbforge/kbcore/error.hpp"

using namespace kbforge;
using namespace kbforge::completion;

namespace {

RelationSpec nativeLanguage() {
  return {"P103", "nativeLanguage", "The native language of [X] is [Y] .", std::nullopt, std::nullopt};
}

ScoredFactCandidate candidate(const std::string& id, const std::string& label, const std::string& relation,
                              const std::string& object, double p) {
  return {{id, label}, relation, object, p};
}

struct ReferenceRow {
  const char* relation;
  std::uint64_t cardinality;
  std::uint64_t missing;
  double high_acc;
  double accuracy;
  std::uint64_t addable;
  double growth;
};

// Reference completion-potential rows.
const ReferenceRow kReferenceRows[] = {
    {"nativeLanguage", 264778, 7871085, 0.86, 0.82, 5550689, 20.96},
    {"spokenLanguage", 2148775, 7090119, 0.77, 0.82, 4476701, 2.08},
    {"headquarteredIn", 409309, 55186, 0.08, 0.82, 3443, 0.008},
    {"developedBy", 42379, 29349, 0.02, 0.62, 363, 0.01},
    {"producedBy", 123036, 31239, 0.008, 0.22, 55, 0.0004},
    {"LanguageOfFilm", 337682, 70669, 0.37, 0.76, 19872, 0.06},
    {"citizenOf", 4206684, 4616601, 0.28, 0.90, 1163383, 0.27},
};

}  // namespace

TEST_CASE("calibration") {
  RelationReport report;
  report.relation = "P103";
  report.r_at_p = 0.4;
  report.threshold_probability = 0.8;
  auto profile = calibrate(report, "eval-1");
  CHECK(profile == ThresholdProfile{"P103", 0.8, 0.9, "eval-1"});

  report.r_at_p = 0.0;
  report.threshold_probability.reset();
  try {
    calibrate(report, "eval-1");
    FAIL("expected an error");
  } catch (const KbError& e) {
    CHECK(std::string(e.what()).find("no calibratable threshold") != std::string::npos);
  }

  std::stringstream io;
  writeProfiles(io, {profile, {"P19", 0.25, 0.9, "eval-1"}}, ArtifactMeta{"abc", 3, "calibrate"});
  auto back = parseProfiles(io);
  REQUIRE(back.items.size() == 2);
  CHECK(back.items[0] == profile);
  CHECK(back.meta->seed == 3);
}

TEST_CASE("high-accuracy filter") {
  ThresholdProfile profile{"P103", 0.7, 0.9, "e"};
  auto empty = filterHighAccuracy({}, profile);
  CHECK(empty.retained.empty());
  CHECK(empty.high_acc_fraction == 0.0);

  std::vector<ScoredFactCandidate> c = {candidate("Q1", "A", "P103", "English", 0.9),
                                        candidate("Q2", "B", "P103", "French", 0.7),
                                        candidate("Q3", "C", "P103", "German", 0.5)};
  auto r = filterHighAccuracy(c, profile);
  REQUIRE(r.retained.size() == 2);
  CHECK(r.retained[0].subject.id == "Q1");
  CHECK(r.retained[1].subject.id == "Q2");
  CHECK(r.high_acc_fraction == doctest::Approx(2.0 / 3.0));

  c.push_back(candidate("Q4", "D", "P19", "Paris", 0.9));
  CHECK_THROWS_AS(filterHighAccuracy(c, profile), KbError);

  // Against a naive filter on random inputs.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredFactCandidate> input;
    std::size_t n = rng() % 40;
    double threshold = std::round(unit(rng) * 10) / 10;
    for (std::size_t i = 0; i < n; ++i) {
      input.push_back(candidate("Q" + std::to_string(i + 1), "s", "P103", "x", std::round(unit(rng) * 10) / 10));
    }
    std::vector<ScoredFactCandidate> naive;
    for (const auto& x : input) {
      if (!(x.probability < threshold)) naive.push_back(x);
    }
    auto got = filterHighAccuracy(input, {"P103", threshold, 0.9, "e"});
    CHECK(got.retained == naive);
    CHECK(got.high_acc_fraction == (n ? static_cast<double>(naive.size()) / n : 0.0));
  }
}

TEST_CASE("verbalization") {
  auto spec = nativeLanguage();
  CHECK(verbalize(candidate("Q1", "Marcus Adams", "P103", "English", 0.9), spec) ==
        "The native language of Marcus Adams is English");
  RelationSpec film{"P364", "LanguageOfFilm", "The original language of [X] is [Y] .", std::nullopt, std::nullopt};
  CHECK(verbalize(candidate("Q2", "Il mio paese", "P364", "Italian", 0.9), film) ==
        "The original language of Il mio paese is Italian");
  RelationSpec reversed{"P1", "r", "[Y] is the language of [X]", std::nullopt, std::nullopt};
  CHECK(verbalize(candidate("Q3", "Bob", "P1", "Dutch", 0.5), reversed) == "Dutch is the language of Bob");
  CHECK(verbalize(candidate("Q3", "[Y] Corp", "P1", "[X]", 0.5), reversed) == "[X] is the language of [Y] Corp");

  CHECK_THROWS_AS(verbalize(candidate("Q1", "Marcus Adams", "P103", "", 0.9), spec), KbError);
  CHECK_THROWS_AS(verbalize(ScoredFactCandidate{{"Q1", std::nullopt}, "P103", "English", 0.9}, spec), KbError);

  auto parsed = parseStatement("The native language of Marcus Adams is English", spec);
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0] == std::pair<std::string, std::string>{"Marcus Adams", "English"});
  CHECK(parseStatement("Something else", spec).empty());
  // A label containing the separator makes the statement ambiguous; the true
  // reading is still among the results.
  auto ambiguous = parseStatement("The native language of This is Spinal Tap is English", spec);
  CHECK(ambiguous.size() == 2);
  CHECK(std::find(ambiguous.begin(), ambiguous.end(),
                  std::pair<std::string, std::string>{"This is Spinal Tap", "English"}) != ambiguous.end());
}

TEST_CASE("review sampling") {
  std::map<std::string, RelationSpec> specs{{"P103", nativeLanguage()}};
  std::vector<ScoredFactCandidate> ten, many;
  for (int i = 1; i <= 10; ++i) ten.push_back(candidate("Q" + std::to_string(i), "Person " + std::to_string(i), "P103", "English", 0.9));
  for (int i = 1; i <= 200; ++i) {
    many.push_back(candidate("Q" + std::to_string(i), "Person " + std::to_string(i), "P103", "English", 0.9));
  }
  CHECK(sampleForReview(ten, specs, 50, 1).size() == 10);

  auto a = sampleForReview(many, specs, 50, 42);
  CHECK(a.size() == 50);
  CHECK(sampleForReview(many, specs, 50, 42) == a);
  auto shuffled = many;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(5));
  CHECK(sampleForReview(shuffled, specs, 50, 42) == a);
  CHECK(sampleForReview(many, specs, 50, 43) != a);

  std::set<std::string> ids;
  for (const auto& t : a) {
    ids.insert(t.task_id);
    CHECK(t.status == TaskStatus::kOpen);
    CHECK(t.task_id == makeTaskId(t.candidate));
    auto back = parseStatement(t.statement, specs.at("P103"));
    CHECK(std::find(back.begin(), back.end(),
                    std::pair<std::string, std::string>{*t.candidate.subject.label, t.candidate.predicted_object}) !=
          back.end());
  }
  CHECK(ids.size() == 50);
  CHECK_THROWS_AS(sampleForReview(many, specs, 0, 42), KbError);
  CHECK_THROWS_AS(sampleForReview(many, {}, 5, 42), KbError);

  // Seven relations at 50 each.
  std::map<std::string, RelationSpec> seven;
  std::vector<ScoredFactCandidate> pool;
  for (int r = 1; r <= 7; ++r) {
    auto pid = "P" + std::to_string(r);
    seven[pid] = {pid, "r" + std::to_string(r), "[X] has [Y] .", std::nullopt, std::nullopt};
    std::vector<ScoredFactCandidate> rel;
    for (int i = 1; i <= 80; ++i) rel.push_back(candidate("Q" + std::to_string(i), "S", pid, "O", 0.9));
    auto part = sampleForReview(rel, seven, 50, 9);
    for (const auto& t : part) pool.push_back(t.candidate);
  }
  CHECK(pool.size() == 350);

  std::stringstream io;
  writeTasks(io, a);
  CHECK(parseTasks(io).items == a);
}

TEST_CASE("completion estimates reproduce the reference rows") {
  for (const auto& row : kReferenceRows) {
    CAPTURE(row.relation);
    auto e = estimateCompletion(row.relation, row.cardinality, row.missing, row.high_acc, row.accuracy);
    // Independent recomputation.
    auto expected = static_cast<std::uint64_t>(std::floor(
        static_cast<long double>(row.missing) * row.high_acc * row.accuracy + 0.5L));
    CHECK(e.addable == expected);
    CHECK(e.growth_factor == doctest::Approx(static_cast<double>(expected) / row.cardinality));
    CHECK(std::fabs(e.growth_factor - row.growth) <= 0.01);
    // Two rows were computed from unrounded fractions; their addable counts
    // cannot be recovered from the printed percentages.
    std::string name = row.relation;
    if (name != "headquarteredIn" && name != "developedBy") CHECK(e.addable == row.addable);
  }
  auto e = estimateCompletion("nativeLanguage", 264778, 7871085, 0.86, 0.82);
  CHECK(formatGrowth(e.growth_factor) == "20.96");
  CHECK(formatGrowth(estimateCompletion("x", 2148775, 7090119, 0.77, 0.82).growth_factor) == "2.08");
  CHECK(formatGrowth(0.0) == "0.00");

  auto zero = estimateCompletion("x", 10, 1000, 0.5, 0.0);
  CHECK(zero.addable == 0);
  CHECK(zero.growth_factor == 0.0);
  CHECK_THROWS_AS(estimateCompletion("x", 0, 1, 0.5, 0.5), KbError);
  CHECK_THROWS_AS(estimateCompletion("x", 1, 1, 1.5, 0.5), KbError);
  CHECK_THROWS_AS(estimateCompletion("x", 1, 1, 0.5, -0.1), KbError);

  auto table = formatEstimateTable({e});
  CHECK(table.find("nativeLanguage\t264778\t7871085\t86\t82\t5550689\t20.96\n") != std::string::npos);
}
