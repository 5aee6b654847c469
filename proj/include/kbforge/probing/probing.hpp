#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kbforge/kbcore/types.hpp"

namespace kbforge::probing {

inline constexpr std::size_t kDefaultTopK = 10;
inline constexpr double kProbabilitySlack = 1e-6;

struct ClozeQuery {
  RecordKey key;
  std::string prompt;
};

// Exactly one [MASK] and no leftover [X]/[Y].
bool isValidCloze(std::string_view prompt);

// [X] -> subject label, [Y] -> [MASK]. Throws KbError(kValidation) for an
// empty label or a template that fails validateRelationSpec.
ClozeQuery instantiatePrompt(const RelationSpec& spec, std::string_view subject_label, RecordKey key = {});

struct BackendDescriptor {
  std::string endpoint;
  std::size_t vocab_size = 0;
  std::size_t max_k = 0;
};

// Checks a fill-mask response: at most k entries, probabilities in [0,1] and
// non-increasing, total mass <= 1 + kProbabilitySlack. Assigns ranks 1..n.
// Throws KbError(kProtocol) on violation; never renormalizes.
std::vector<Prediction> validatePredictions(std::vector<Prediction> predictions, std::size_t k);

// The fill-mask wire protocol. Implementations must be safe to call from
// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendDescriptor describe() = 0;
  virtual std::vector<Prediction> fillMask(const std::string& prompt, std::size_t k) = 0;
  virtual std::vector<std::string> vocab() = 0;
  virtual std::vector<std::string> tokenize(const std::string& text) = 0;
  virtual bool health() = 0;
};

// True iff the backend tokenizes `label` into exactly one vocabulary token.
bool inVocab(Backend& backend, const std::string& label);

// Caches inVocab answers; shareable across threads.
class VocabOracle {
 public:
  explicit VocabOracle(Backend& backend) : backend_(backend) {}
  bool operator()(std::string_view label);

 private:
  Backend& backend_;
  std::mutex mu_;
  std::map<std::string, bool, std::less<>> cache_;
};

// Offline backend driven by a fixture table. Unknown prompts get a uniform
// distribution over the fallback list. Tokenization is greedy WordPiece over
// whitespace-separated words against the vocabulary.
class MockBackend : public Backend {
 public:
  struct Options {
    std::vector<std::string> fallback_tokens;
    std::vector<std::string> extra_vocab;
    std::size_t max_k = 100;
  };

  MockBackend(std::map<std::string, std::vector<Prediction>> table, Options options);
  // Not safe against concurrent use of `other`.
  MockBackend(MockBackend&& other) noexcept;

  // Lines `prompt<TAB>token:prob[,token:prob...]`. Directives:
  // `#fallback<TAB>tok,tok,...` and `#vocab<TAB>tok,tok,...`; other `#` lines
  // are comments.
  static MockBackend parse(std::istream& in);
  static MockBackend loadFile(const std::string& path);

  BackendDescriptor describe() override;
  std::vector<Prediction> fillMask(const std::string& prompt, std::size_t k) override;
  std::vector<std::string> vocab() override;
  std::vector<std::string> tokenize(const std::string& text) override;
  bool health() override { return true; }

  // Vocabulary extension: later tokenize() calls treat each token as atomic.
  void addTokens(const std::vector<std::string>& tokens);

 private:
  std::map<std::string, std::vector<Prediction>> table_;
  std::vector<std::string> fallback_;
  std::size_t max_k_;
  mutable std::mutex mu_;
  std::set<std::string> vocab_;
};

// HTTP client for the wire protocol:
//   POST /fill-mask {prompt, k} -> {predictions: [{token, probability}]}
//   GET  /vocab?page=N          -> {size, tokens, page, pages}
//   POST /tokenize {text}       -> {tokens}
//   GET  /health                -> {status[, vocab_size, max_k]}
// Connection failures and 5xx are KbError(kTransport); anything malformed is
// KbError(kProtocol).
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));

  BackendDescriptor describe() override;
  std::vector<Prediction> fillMask(const std::string& prompt, std::size_t k) override;
  std::vector<std::string> vocab() override;
  std::vector<std::string> tokenize(const std::string& text) override;
  bool health() override;

 private:
  std::string get(const std::string& path);
  std::string post(const std::string& path, const std::string& body);

  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  // Injectable for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct ProbeOptions {
  std::size_t k = kDefaultTopK;
  std::size_t window = 4;  // concurrent in-flight queries
  RetryPolicy retry;
};

struct ProbeInput {
  RecordKey key;
  std::string subject_label;
};

std::vector<ProbeInput> probeInputs(const std::vector<BenchmarkRecord>& records);
std::vector<ProbeInput> probeInputs(const std::vector<EntityRef>& subjects, const std::string& relation);

struct ProbeResult {
  std::vector<PredictionSet> sets;  // input order
  std::size_t failures = 0;
  std::size_t transport_failures = 0;
};

// One PredictionSet per input. Transport errors are retried with exponential
// backoff; a query that still fails yields an empty set carrying the error.
// The batch itself only throws for unusable arguments (unknown relation,
// k above the backend's max_k).
ProbeResult probeBatch(const std::vector<ProbeInput>& inputs, const std::map<std::string, RelationSpec>& specs,
                       Backend& backend, const ProbeOptions& options = {});

}  // namespace kbforge::probing
