#include <algorithm>
#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>
#include <random>
#include <sstream>

#include "../support/dump_builder.hpp"
#include "doctest.h"
#include "kbforge/ingest/benchmark.hpp"
#include "kbforge/ingest/dump.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/io.hpp"

using namespace kbforge;
using namespace kbforge::ingest;
using kbforge::testing::dumpOf;
using kbforge::testing::entityLine;
using kbforge::testing::FixtureClaim;

namespace {

std::vector<DumpEntity> readAll(const std::string& text, SkipReport* report = nullptr) {
  std::istringstream in(text);
  EntityStream stream(in);
  std::vector<DumpEntity> out;
  DumpEntity e;
  while (stream.next(e)) out.push_back(e);
  if (report) *report = stream.report();
  return out;
}

RelationSpec spec(const std::string& pid, const std::string& name) {
  return {pid, name, "[X] relates to [Y] .", std::nullopt, std::nullopt};
}

template <typename Filter>
std::string compress(const std::string& text) {
  std::ostringstream out;
  {
    boost::iostreams::filtering_ostream f;
    f.push(Filter());
    f.push(out);
    f << text;
  }
  return out.str();
}

// Object entities Q1000..Q1009 with labels.
std::vector<std::string> languageEntities() {
  std::vector<std::string> lines;
  for (int i = 0; i < 10; ++i) {
    lines.push_back(entityLine("Q" + std::to_string(1000 + i), "Language " + std::to_string(i), {}));
  }
  return lines;
}

}  // namespace

TEST_CASE("streamEntities") {
  SUBCASE("empty array") {
    SkipReport report;
    CHECK(readAll("[\n]\n", &report).empty());
    CHECK(report == SkipReport{});
  }
  SUBCASE("corrupted line is counted and skipped") {
    std::string text = "[\n" + entityLine("Q1", "one", {}) + ",\n{\"id\": \"Q2\", \"labels\": {,\n" +
                       entityLine("Q3", std::nullopt, {}) + "\n]\n";
    SkipReport report;
    auto entities = readAll(text, &report);
    REQUIRE(entities.size() == 2);
    CHECK(entities[0].id == "Q1");
    CHECK(entities[1].id == "Q3");
    CHECK(report.entities_parsed == 2);
    CHECK(report.parse_errors == 1);
    CHECK(report.missing_labels == 1);
  }
  SUBCASE("labels and ranks") {
    auto entities = readAll(dumpOf({entityLine("Q937", "Albert Einstein",
                                               {{"P103", "Q188", "deprecated"}, {"P103", "Q1860", "normal"},
                                                {"P569", "1879-03-14", "normal", true}})}));
    REQUIRE(entities.size() == 1);
    const auto& e = entities[0];
    CHECK(e.label() == "Albert Einstein");
    CHECK(e.label("de") == "de:Q937");
    REQUIRE(e.claims.at("P103").size() == 2);
    CHECK(e.claims.at("P103")[0].rank == StatementRank::kDeprecated);
    CHECK(e.truthyObjects("P103") == std::vector<std::string>{"Q1860"});
    CHECK_FALSE(e.claims.at("P569")[0].object_id.has_value());
    CHECK(e.holds("P569"));
  }
  SUBCASE("numeric-id only values and empty claims") {
    auto line = R"({"id":"Q5","labels":{},"claims":{"P31":[{"mainsnak":{"snaktype":"value","datavalue":{"type":"wikibase-entityid","value":{"entity-type":"item","numeric-id":215627}}},"rank":"normal"}],"P40":[{"mainsnak":{"snaktype":"novalue"},"rank":"normal"}]}})";
    auto e = parseEntityLine(line);
    REQUIRE(e.has_value());
    CHECK(e->truthyObjects("P31") == std::vector<std::string>{"Q215627"});
    CHECK(e->holds("P40"));
    CHECK(e->truthyObjects("P40").empty());
    CHECK(parseEntityLine(R"({"id":"Q6","labels":[],"claims":[]})").has_value());
    auto with_qualifier = parseEntityLine(
        R"({"id":"Q7","claims":{"P103":[{"mainsnak":{"snaktype":"value","datavalue":{"type":"wikibase-entityid","value":{"id":"Q188"}}},"qualifiers":{"P580":[{"snaktype":"value","datavalue":{"type":"wikibase-entityid","value":{"id":"Q999"}}}]},"rank":"preferred"}]}})");
    REQUIRE(with_qualifier.has_value());
    REQUIRE(with_qualifier->claims.at("P103").size() == 1);
    CHECK(with_qualifier->claims.at("P103")[0].object_id == "Q188");
    CHECK(with_qualifier->claims.at("P103")[0].rank == StatementRank::kPreferred);
    CHECK_FALSE(parseEntityLine(R"({"id":"nonsense"})").has_value());
    CHECK_FALSE(parseEntityLine(R"([1,2])").has_value());
  }
  SUBCASE("compressed input is transparent") {
    std::string text = dumpOf({entityLine("Q1", "one", {}), entityLine("Q2", "two", {})});
    for (const auto& blob : {compress<boost::iostreams::gzip_compressor>(text),
                             compress<boost::iostreams::bzip2_compressor>(text)}) {
      auto source = DumpSource::fromString(blob);
      std::vector<std::string> ids;
      auto report = scanEntities(source, {1}, [&](std::size_t, const DumpEntity& e) { ids.push_back(e.id); });
      CHECK(ids == std::vector<std::string>{"Q1", "Q2"});
      CHECK(report.entities_parsed == 2);
    }
  }
  SUBCASE("unreadable file is fatal") {
    CHECK_THROWS_AS(DumpSource::fromFile("/nonexistent/dump.json").open(), KbError);
  }
  SUBCASE("parallel scan sees every entity once") {
    std::vector<std::string> lines;
    for (int i = 1; i <= 500; ++i) lines.push_back(entityLine("Q" + std::to_string(i), "e", {}));
    lines.insert(lines.begin() + 100, "{broken");
    auto source = DumpSource::fromString(dumpOf(lines));
    for (std::size_t workers : {1u, 3u, 8u}) {
      std::vector<std::vector<std::string>> seen(workers);
      auto report = scanEntities(source, {workers, 7},
                                 [&](std::size_t w, const DumpEntity& e) { seen[w].push_back(e.id); });
      std::size_t total = 0;
      for (const auto& s : seen) total += s.size();
      CHECK(total == 500);
      CHECK(report.entities_parsed == 500);
      CHECK(report.parse_errors == 1);
    }
  }
  SUBCASE("visitor exceptions propagate") {
    auto source = DumpSource::fromString(dumpOf({entityLine("Q1", "a", {}), entityLine("Q2", "b", {})}));
    CHECK_THROWS_AS(scanEntities(source, {4, 1},
                                 [](std::size_t, const DumpEntity&) { throw KbError(ErrorKind::kData, "boom"); }),
                    KbError);
  }
}

TEST_CASE("extractTriples") {
  std::set<std::string> relations{"P103"};
  DumpEntity empty;
  empty.id = "Q1";
  CHECK(extractTriples(empty, relations).empty());

  auto einstein = *parseEntityLine(entityLine("Q937", "Albert Einstein", {{"P103", "Q188"}, {"P27", "Q183"}}));
  auto triples = extractTriples(einstein, relations);
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].subject == EntityRef{"Q937", "Albert Einstein"});
  CHECK(triples[0].relation == "P103");
  CHECK(triples[0].object.id == "Q188");

  auto deprecated = *parseEntityLine(entityLine("Q937", "Albert Einstein", {{"P103", "Q188", "deprecated"}}));
  SkipReport report;
  CHECK(extractTriples(deprecated, relations, &report).empty());
  CHECK(report.statements_deprecated == 1);

  auto mixed = *parseEntityLine(entityLine(
      "Q2", "x", {{"P103", "Q188", "deprecated"}, {"P103", "Q150", "normal"}, {"P103", "text", "normal", true}}));
  SkipReport mixed_report;
  auto mixed_triples = extractTriples(mixed, relations, &mixed_report);
  REQUIRE(mixed_triples.size() == 1);
  CHECK(mixed_triples[0].object.id == "Q150");
  CHECK(mixed_report.statements_deprecated == 1);
  CHECK(mixed_report.statements_nonentity == 1);
}

TEST_CASE("buildBenchmark") {
  auto lines = languageEntities();
  // P103: 7 subjects. P1412: Q1 holds two objects. P37: 3 subjects.
  for (int i = 1; i <= 7; ++i) {
    lines.push_back(entityLine("Q" + std::to_string(i), "Person " + std::to_string(i),
                               {{"P103", "Q100" + std::to_string(i % 3)}}));
  }
  lines.push_back(entityLine("Q20", "Polyglot", {{"P1412", "Q1000"}, {"P1412", "Q1001"}, {"P1412", "Q1000"}}));
  for (int i = 30; i < 33; ++i) {
    lines.push_back(entityLine("Q" + std::to_string(i), "Country " + std::to_string(i), {{"P37", "Q1005"}}));
  }
  auto source = DumpSource::fromString(dumpOf(lines));
  std::vector<RelationSpec> specs{spec("P103", "nativeLanguage"), spec("P1412", "languagesSpoken"),
                                  spec("P37", "officialLanguage")};

  SUBCASE("under the cap everything is returned") {
    auto build = buildBenchmark(source, specs, {100000, 1, 1});
    CHECK(build.records.at("P37").size() == 3);
    CHECK(build.records.at("P103").size() == 7);
    CHECK(build.relation_stats.at("P37") == RelationBuildStats{3, 0, 0, 3});
  }
  SUBCASE("multi-valued pairs form one record") {
    auto build = buildBenchmark(source, specs, {100000, 1, 1});
    const auto& records = build.records.at("P1412");
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].valid_objects.size() == 2);
    CHECK(records[0].valid_objects[0] == EntityRef{"Q1000", "Language 0"});
    CHECK(records[0].valid_objects[1] == EntityRef{"Q1001", "Language 1"});
  }
  SUBCASE("cap of 5 out of 7, stable across reruns and worker counts") {
    auto reference = buildBenchmark(source, specs, {5, 42, 1});
    REQUIRE(reference.records.at("P103").size() == 5);
    CHECK(reference.relation_stats.at("P103") == RelationBuildStats{7, 0, 2, 5});
    auto bytes = serializeBenchmark(reference.records.at("P103"));
    for (std::size_t workers : {1u, 2u, 8u}) {
      auto again = buildBenchmark(source, specs, {5, 42, workers});
      CHECK(serializeBenchmark(again.records.at("P103")) == bytes);
    }
    auto other_seed = buildBenchmark(source, specs, {5, 43, 1});
    CHECK(other_seed.records.at("P103").size() == 5);
  }
  SUBCASE("invalid relation spec fails before the dump is read") {
    auto missing = DumpSource::fromFile("/nonexistent/dump.json");
    auto bad = specs;
    bad.push_back({"P999", "broken", "no placeholders", std::nullopt, std::nullopt});
    try {
      buildBenchmark(missing, bad, {});
      FAIL("expected an error");
    } catch (const KbError& e) {
      CHECK(e.kind() == ErrorKind::kValidation);
    }
    CHECK_THROWS_AS(buildBenchmark(source, specs, {0, 1, 1}), KbError);
  }
}

TEST_CASE("buildBenchmark drops and accounts for unlabeled entities") {
  std::vector<std::string> lines{
      entityLine("Q1000", "English", {}),
      entityLine("Q1001", std::nullopt, {}),  // object without label
      entityLine("Q1", "Alice", {{"P103", "Q1000"}}),
      entityLine("Q2", std::nullopt, {{"P103", "Q1000"}}),             // subject without label
      entityLine("Q3", "Carol", {{"P103", "Q1000"}, {"P103", "Q1001"}}),  // one unlabeled object
      entityLine("Q4", "Dave", {{"P103", "Q1000", "deprecated"}}),      // no truthy statement
      entityLine("Q5", "Eve", {{"P103", "Q9999"}}),                     // object absent from dump
  };
  auto build = buildBenchmark(DumpSource::fromString(dumpOf(lines)), {spec("P103", "nativeLanguage")}, {10, 3, 1});
  const auto& records = build.records.at("P103");
  REQUIRE(records.size() == 1);
  CHECK(records[0].subject.id == "Q1");
  auto stats = build.relation_stats.at("P103");
  CHECK(stats == RelationBuildStats{4, 3, 0, 1});
  CHECK(stats.candidate_pairs == stats.emitted + stats.dropped_unlabeled + stats.sampled_out);
  CHECK(build.skips.entities_parsed == 7);
  CHECK(build.skips.missing_labels == 2);
  CHECK(build.skips.statements_deprecated == 1);
  for (const auto& r : records) {
    CHECK(r.subject.label.has_value());
    for (const auto& o : r.valid_objects) CHECK(o.label.has_value());
  }
}

TEST_CASE("cap exactness on generated dumps") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 15; ++trial) {
    auto lines = languageEntities();
    std::size_t subjects = rng() % 60 + 1;
    std::size_t holders = 0;
    for (std::size_t i = 1; i <= subjects; ++i) {
      std::vector<FixtureClaim> claims;
      if (rng() % 4 != 0) {
        claims.push_back({"P103", "Q100" + std::to_string(rng() % 10)});
        ++holders;
      }
      lines.push_back(entityLine("Q" + std::to_string(i), "S" + std::to_string(i), claims));
    }
    std::shuffle(lines.begin(), lines.end(), rng);
    auto source = DumpSource::fromString(dumpOf(lines));
    std::size_t cap = rng() % 40 + 1;
    std::size_t workers = rng() % 4 + 1;
    auto build = buildBenchmark(source, {spec("P103", "nativeLanguage")}, {cap, rng(), workers});
    REQUIRE(build.records.at("P103").size() == std::min(holders, cap));
  }
}

TEST_CASE("datasetStats") {
  auto in_vocab = [](std::string_view label) { return label.find(' ') == std::string_view::npos; };
  SUBCASE("point mass") {
    std::map<std::string, std::vector<BenchmarkRecord>> bench{
        {"P103", {{{"Q1", "a"}, "P103", {{"Q10", "English"}}}}}};
    auto stats = datasetStats(bench, in_vocab);
    auto rs = stats.per_relation.at("P103");
    CHECK(rs.n_multi_token_objects == 0);
    CHECK(rs.unique_objects == 1);
    CHECK(rs.entropy_normalized == 0.0);
  }
  SUBCASE("uniform pair and totals") {
    std::map<std::string, std::vector<BenchmarkRecord>> bench{
        {"P103", {{{"Q1", "a"}, "P103", {{"Q10", "English"}}}, {{"Q2", "b"}, "P103", {{"Q11", "Old French"}}}}},
        {"P1412", {{{"Q1", "a"}, "P1412", {{"Q10", "English"}, {"Q11", "Old French"}}}}}};
    auto stats = datasetStats(bench, in_vocab);
    CHECK(stats.per_relation.at("P103").entropy_normalized == 1.0);
    CHECK(stats.total.unique_subjects == 2);
    CHECK(stats.total.unique_objects == 2);
    CHECK(stats.total.n_triples == 4);
    CHECK(stats.total.n_multi_token_objects == 2);
    CHECK(stats.avg_triples == 2.0);
    auto text = formatDatasetStats(stats);
    CHECK(text.find("total\t2\t2\t4\t2") != std::string::npos);
  }
}

TEST_CASE("computeSubjectTypeStats") {
  std::vector<std::string> lines{
      entityLine("Q1", "a", {{"P31", "Q5"}, {"P103", "Q1000"}}),
      entityLine("Q2", "b", {{"P31", "Q5"}, {"P103", "Q1000"}, {"P103", "Q1001"}}),
      entityLine("Q3", "c", {{"P31", "Q5"}, {"P103", "Q1000"}}),
      entityLine("Q4", "d", {{"P31", "Q4830453"}, {"P103", "Q1000"}}),
      entityLine("Q6", "f", {{"P31", "Q5"}, {"P103", "Q1000", "deprecated"}}),
      entityLine("Q7", "g", {{"P31", "Q5"}}),
  };
  auto source = DumpSource::fromString(dumpOf(lines));
  for (std::size_t workers : {1u, 4u}) {
    auto stats = computeSubjectTypeStats(source, "P103", workers);
    CHECK(stats.class_counts == std::map<std::string, std::uint64_t>{{"Q5", 3}, {"Q4830453", 1}});
    CHECK(stats.modalClass() == "Q5");
    CHECK(stats.subjects == 4);
    CHECK(stats.cardinality == 5);
  }
  CHECK(computeSubjectTypeStats(source, "P999").class_counts.empty());
  CHECK_FALSE(computeSubjectTypeStats(source, "P999").modalClass().has_value());

  SubjectTypeStats tie;
  tie.class_counts = {{"Q515", 2}, {"Q5", 2}, {"Q1000", 1}};
  CHECK(tie.modalClass() == "Q5");
}

TEST_CASE("sampleMissingFacts") {
  std::vector<std::string> lines;
  for (int i = 1; i <= 10; ++i) {
    lines.push_back(entityLine("Q" + std::to_string(i), "Person " + std::to_string(i), {{"P31", "Q5"}}));
  }
  lines.push_back(entityLine("Q11", "Holder", {{"P31", "Q5"}, {"P103", "Q1000"}}));
  lines.push_back(entityLine("Q12", std::nullopt, {{"P31", "Q5"}}));           // no label
  lines.push_back(entityLine("Q13", "Acme", {{"P31", "Q4830453"}}));           // wrong class
  lines.push_back(entityLine("Q14", "Novalue", {{"P31", "Q5"}, {"P103", "x", "normal", true}}));
  lines.push_back(entityLine("Q15", "Deprecated only", {{"P31", "Q5"}, {"P103", "Q1000", "deprecated"}}));
  lines.push_back(entityLine("Q16", "Old class", {{"P31", "Q5", "deprecated"}}));
  auto source = DumpSource::fromString(dumpOf(lines));

  auto all = sampleMissingFacts(source, "P103", "Q5", 100, 9);
  CHECK(all.pool_size == 11);
  REQUIRE(all.subjects.size() == 11);
  CHECK(std::any_of(all.subjects.begin(), all.subjects.end(), [](const EntityRef& e) { return e.id == "Q15"; }));
  for (const auto& s : all.subjects) {
    CHECK(s.id != "Q11");
    CHECK(s.id != "Q12");
    CHECK(s.id != "Q13");
    CHECK(s.id != "Q14");
    CHECK(s.id != "Q16");
  }

  auto four = sampleMissingFacts(source, "P103", "Q5", 4, 9);
  CHECK(four.subjects.size() == 4);
  CHECK(four.pool_size == 11);
  for (std::size_t workers : {1u, 3u, 8u}) {
    CHECK(sampleMissingFacts(source, "P103", "Q5", 4, 9, workers).subjects == four.subjects);
  }

  std::vector<std::string> held;
  for (int i = 1; i <= 3; ++i) {
    held.push_back(entityLine("Q" + std::to_string(i), "p", {{"P31", "Q5"}, {"P103", "Q1000"}}));
  }
  auto none = sampleMissingFacts(DumpSource::fromString(dumpOf(held)), "P103", "Q5", 10, 1);
  CHECK(none.subjects.empty());
  CHECK(none.pool_size == 0);
  CHECK_THROWS_AS(sampleMissingFacts(source, "P103", "Q5", 0, 1), KbError);
}
