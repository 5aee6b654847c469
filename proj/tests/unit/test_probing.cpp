#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/probing/probing.hpp"
#include "kbforge/probing/server.hpp"

using namespace kbforge;
using namespace kbforge::probing;

namespace {

const char* kTable =
    "# birthplace probes\n"
    "Albert Einstein was born in [MASK] .\tParis:0.8,Lyon:0.1\n"
    "Marie Curie was born in [MASK] .\tWarsaw:0.6,Paris:0.3,Lyon:0.05\n"
    "#fallback\tLondon,Berlin,Rome,Madrid\n"
    "#vocab\tBall,##oon,Aerospace,&,Technologies,Tech,##no\n";

MockBackend mockFromTable() {
  std::istringstream in(kTable);
  return MockBackend::parse(in);
}

RelationSpec birthplace() { return {"P19", "place of birth", "[X] was born in [Y] .", std::nullopt, std::nullopt}; }

BenchmarkRecord record(const std::string& id, const std::string& label) {
  return {{id, label}, "P19", {{"Q90", std::string("Paris")}}};
}

// Fails every query for one prompt with a transport error; counts calls.
class FlakyBackend : public Backend {
 public:
  FlakyBackend(Backend& inner, std::string bad_prompt, int failures_before_success)
      : inner_(inner), bad_(std::move(bad_prompt)), remaining_(failures_before_success) {}

  BackendDescriptor describe() override { return inner_.describe(); }
  std::vector<Prediction> fillMask(const std::string& prompt, std::size_t k) override {
    if (prompt == bad_) {
      ++bad_calls;
      if (remaining_ < 0 || remaining_-- > 0) throw KbError(ErrorKind::kTransport, "connection reset");
    }
    return inner_.fillMask(prompt, k);
  }
  std::vector<std::string> vocab() override { return inner_.vocab(); }
  std::vector<std::string> tokenize(const std::string& t) override { return inner_.tokenize(t); }
  bool health() override { return true; }

  std::atomic<int> bad_calls{0};

 private:
  Backend& inner_;
  std::string bad_;
  std::atomic<int> remaining_;
};

class MalformedBackend : public MockBackend {
 public:
  using MockBackend::MockBackend;
  std::vector<Prediction> fillMask(const std::string&, std::size_t) override {
    ++calls;
    return {{"a", 0.2, 1}, {"b", 0.7, 2}};
  }
  std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("prompt instantiation") {
  auto q = instantiatePrompt(birthplace(), "Albert Einstein", {"Q937", "P19"});
  CHECK(q.prompt == "Albert Einstein was born in [MASK] .");
  CHECK(q.key == RecordKey{"Q937", "P19"});
  CHECK(isValidCloze(q.prompt));

  CHECK_THROWS_AS(instantiatePrompt(birthplace(), "  "), KbError);
  auto broken = birthplace();
  broken.template_text = "[X] was born.";
  CHECK_THROWS_AS(instantiatePrompt(broken, "Albert Einstein"), KbError);
  // A label that smuggles in a mask cannot yield a valid cloze query.
  CHECK_THROWS_AS(instantiatePrompt(birthplace(), "The [MASK] Band"), KbError);
  CHECK_THROWS_AS(instantiatePrompt(birthplace(), "Agent [Y]"), KbError);
  CHECK_FALSE(isValidCloze("Agent [Y] was born in [MASK] ."));
}

TEST_CASE("instantiated prompts always hold exactly one mask") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pieces = {"[X]", "[Y]", "[MASK]", "born", " ", "in", ".", "é", "[", "]", "X"};
  int produced = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto spec = birthplace();
    spec.template_text.clear();
    std::string label;
    for (int i = 0; i < 6; ++i) spec.template_text += pieces[rng() % pieces.size()];
    for (int i = 0; i < 3; ++i) label += pieces[rng() % pieces.size()];
    try {
      auto q = instantiatePrompt(spec, label);
      std::size_t masks = 0;
      for (auto pos = q.prompt.find("[MASK]"); pos != std::string::npos; pos = q.prompt.find("[MASK]", pos + 1)) {
        ++masks;
      }
      CHECK(masks == 1);
      ++produced;
    } catch (const KbError& e) {
      CHECK(e.kind() == ErrorKind::kValidation);
    }
  }
  CHECK(produced > 0);
}

TEST_CASE("prediction validation") {
  auto ok = validatePredictions({{"a", 0.5, 0}, {"b", 0.5, 0}}, 2);
  CHECK(ok[0].rank == 1);
  CHECK(ok[1].rank == 2);
  CHECK(validatePredictions({}, 3).empty());
  // Slack for float noise, never renormalized.
  auto noisy = validatePredictions({{"a", 0.6000005, 0}, {"b", 0.4, 0}}, 2);
  CHECK(noisy[0].probability == 0.6000005);

  auto protocolError = [](std::vector<Prediction> p, std::size_t k) {
    try {
      validatePredictions(std::move(p), k);
    } catch (const KbError& e) {
      return e.kind() == ErrorKind::kProtocol;
    }
    return false;
  };
  CHECK(protocolError({{"a", 0.5, 0}, {"b", 0.2, 0}}, 1));
  CHECK(protocolError({{"a", 0.2, 0}, {"b", 0.5, 0}}, 2));
  CHECK(protocolError({{"a", 1.2, 0}}, 1));
  CHECK(protocolError({{"a", -0.1, 0}}, 1));
  CHECK(protocolError({{"a", 0.7, 0}, {"b", 0.6, 0}}, 2));
}

TEST_CASE("mock backend") {
  auto mock = mockFromTable();
  auto top = mock.fillMask("Albert Einstein was born in [MASK] .", 10);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == Prediction{"Paris", 0.8, 1});
  CHECK(top[1] == Prediction{"Lyon", 0.1, 2});
  auto one = mock.fillMask("Albert Einstein was born in [MASK] .", 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].token == "Paris");

  auto fallback = mock.fillMask("Nobody was born in [MASK] .", 3);
  REQUIRE(fallback.size() == 3);
  for (const auto& p : fallback) CHECK(p.probability == doctest::Approx(0.25));
  CHECK(fallback[0].token == "London");

  CHECK_THROWS_AS(mock.fillMask("no mask here", 1), KbError);
  CHECK_THROWS_AS(mock.fillMask("[MASK] [MASK]", 1), KbError);
  CHECK_THROWS_AS(mock.fillMask("x [MASK]", 0), KbError);

  std::istringstream bad("p [MASK]\tParis:zero\n");
  CHECK_THROWS_AS(MockBackend::parse(bad), KbError);
  std::istringstream unsorted("p [MASK]\tParis:0.1,Lyon:0.5\n");
  CHECK_THROWS_AS(MockBackend::parse(unsorted), KbError);
  std::istringstream dup("p [MASK]\tParis:0.1\np [MASK]\tLyon:0.1\n");
  CHECK_THROWS_AS(MockBackend::parse(dup), KbError);
}

TEST_CASE("tokenization and vocabulary extension") {
  auto mock = mockFromTable();
  CHECK(mock.tokenize("Paris") == std::vector<std::string>{"Paris"});
  CHECK(inVocab(mock, "Paris"));
  auto multi = mock.tokenize("Ball Aerospace & Technologies");
  CHECK(multi.size() == 4);
  CHECK_FALSE(inVocab(mock, "Ball Aerospace & Technologies"));
  CHECK(mock.tokenize("Balloon") == std::vector<std::string>{"Ball", "##oon"});
  CHECK(mock.tokenize("Technologies") == std::vector<std::string>{"Technologies"});
  CHECK_FALSE(inVocab(mock, "Zanzibar"));
  CHECK(mock.tokenize("Zanzibar") == std::vector<std::string>{"[UNK]"});

  auto before = mock.describe().vocab_size;
  mock.addTokens({"Ball Aerospace & Technologies"});
  CHECK(mock.describe().vocab_size == before + 1);
  CHECK(inVocab(mock, "Ball Aerospace & Technologies"));

  VocabOracle oracle(mock);
  CHECK(oracle("Paris"));
  CHECK_FALSE(oracle("Zanzibar"));
  CHECK_FALSE(oracle("Zanzibar"));
}

TEST_CASE("batch probing") {
  auto mock = mockFromTable();
  std::map<std::string, RelationSpec> specs{{"P19", birthplace()}};
  std::vector<BenchmarkRecord> records = {record("Q937", "Albert Einstein"), record("Q7186", "Marie Curie"),
                                          record("Q1", "Nobody")};
  auto inputs = probeInputs(records);

  ProbeOptions serial;
  serial.window = 1;
  auto a = probeBatch(inputs, specs, mock, serial);
  REQUIRE(a.sets.size() == 3);
  CHECK(a.failures == 0);
  CHECK(a.sets[0].key == RecordKey{"Q937", "P19"});
  CHECK(a.sets[0].predictions[0].token == "Paris");
  CHECK(a.sets[1].predictions[0].token == "Warsaw");
  CHECK(a.sets[2].predictions.size() == 4);
  for (const auto& s : a.sets) CHECK(isWellOrdered(s.predictions));

  ProbeOptions wide;
  wide.window = 8;
  CHECK(probeBatch(inputs, specs, mock, wide).sets == a.sets);

  ProbeOptions top1;
  top1.k = 1;
  for (const auto& s : probeBatch(inputs, specs, mock, top1).sets) CHECK(s.predictions.size() == 1);

  ProbeOptions too_many;
  too_many.k = 101;
  CHECK_THROWS_AS(probeBatch(inputs, specs, mock, too_many), KbError);
  CHECK_THROWS_AS(probeBatch(probeInputs({{"Q5", std::string("X")}}, "P999"), specs, mock), KbError);
  CHECK(probeBatch({}, specs, mock).sets.empty());

  auto by_subject = probeInputs({{"Q937", std::string("Albert Einstein")}}, "P19");
  CHECK(probeBatch(by_subject, specs, mock).sets[0] == a.sets[0]);
}

TEST_CASE("transport failures are retried and then recorded") {
  auto mock = mockFromTable();
  std::map<std::string, RelationSpec> specs{{"P19", birthplace()}};
  auto inputs = probeInputs(std::vector<BenchmarkRecord>{record("Q937", "Albert Einstein"),
                                                         record("Q7186", "Marie Curie"), record("Q1", "Nobody")});
  std::vector<std::chrono::milliseconds> sleeps;
  std::mutex mu;
  ProbeOptions options;
  options.retry.sleep = [&](std::chrono::milliseconds d) {
    std::lock_guard lock(mu);
    sleeps.push_back(d);
  };

  SUBCASE("permanent") {
    FlakyBackend flaky(mock, "Marie Curie was born in [MASK] .", -1);
    auto r = probeBatch(inputs, specs, flaky, options);
    REQUIRE(r.sets.size() == 3);
    CHECK(r.failures == 1);
    CHECK(r.transport_failures == 1);
    CHECK(flaky.bad_calls == 3);
    CHECK(r.sets[1].predictions.empty());
    REQUIRE(r.sets[1].error.has_value());
    CHECK(r.sets[1].error->find("connection reset") != std::string::npos);
    CHECK(r.sets[1].key == RecordKey{"Q7186", "P19"});
    CHECK_FALSE(r.sets[0].error.has_value());
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(200),
                                                          std::chrono::milliseconds(400)});
  }
  SUBCASE("transient") {
    FlakyBackend flaky(mock, "Marie Curie was born in [MASK] .", 1);
    auto r = probeBatch(inputs, specs, flaky, options);
    CHECK(r.failures == 0);
    CHECK(flaky.bad_calls == 2);
    CHECK(r.sets[1].predictions[0].token == "Warsaw");
  }
  SUBCASE("protocol errors are not retried") {
    MalformedBackend bad({}, {});
    auto r = probeBatch(inputs, specs, bad, options);
    CHECK(r.failures == 3);
    CHECK(r.transport_failures == 0);
    CHECK(bad.calls == 3);
    CHECK(sleeps.empty());
    CHECK(r.sets[0].error->find("protocol") != std::string::npos);
  }
}

TEST_CASE("http backend against the wire server") {
  auto mock = mockFromTable();
  BackendServer server(mock, 3);
  int port = server.bind("127.0.0.1", 0);
  std::thread serving([&] { server.serve(); });

  HttpBackend http("127.0.0.1:" + std::to_string(port), std::chrono::seconds(5));
  for (int i = 0; i < 100 && !http.health(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  REQUIRE(http.health());

  CHECK(http.fillMask("Albert Einstein was born in [MASK] .", 10) ==
        mock.fillMask("Albert Einstein was born in [MASK] .", 10));
  CHECK(http.vocab() == mock.vocab());
  CHECK(http.describe().vocab_size == mock.vocab().size());
  CHECK(http.describe().max_k == 100);
  CHECK(http.tokenize("Ball Aerospace & Technologies").size() > 1);

  try {
    http.fillMask("no mask", 1);
    FAIL("expected an error");
  } catch (const KbError& e) {
    CHECK(e.kind() == ErrorKind::kProtocol);
  }

  std::map<std::string, RelationSpec> specs{{"P19", birthplace()}};
  auto inputs = probeInputs(std::vector<BenchmarkRecord>{record("Q937", "Albert Einstein"), record("Q1", "Nobody")});
  CHECK(probeBatch(inputs, specs, http).sets == probeBatch(inputs, specs, mock).sets);

  server.stop();
  serving.join();

  try {
    http.fillMask("x [MASK]", 1);
    FAIL("expected an error");
  } catch (const KbError& e) {
    CHECK(e.kind() == ErrorKind::kTransport);
  }
  CHECK_FALSE(http.health());
}
