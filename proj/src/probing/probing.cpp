#include "kbforge/probing/probing.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <sstream>
#include <thread>

#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge::probing {
namespace {

std::size_t countOf(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replaceOnce(std::string& text, std::string_view from, std::string_view to) {
  auto pos = text.find(from);
  if (pos != std::string::npos) text.replace(pos, from.size(), to);
}

std::vector<std::string> splitList(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = text.find(sep, start);
    auto item = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

bool isValidCloze(std::string_view prompt) {
  return countOf(prompt, kMaskToken) == 1 && countOf(prompt, kSubjectPlaceholder) == 0 &&
         countOf(prompt, kObjectPlaceholder) == 0;
}

ClozeQuery instantiatePrompt(const RelationSpec& spec, std::string_view subject_label, RecordKey key) {
  if (trim(subject_label).empty()) throw KbError(ErrorKind::kValidation, "empty subject label");
  auto errors = validateRelationSpec(spec);
  if (!errors.empty()) throw KbError(ErrorKind::kValidation, "relation " + spec.pid + ": " + errors.front());
  std::string prompt = spec.template_text;
  replaceOnce(prompt, kObjectPlaceholder, kMaskToken);
  auto x = prompt.find(kSubjectPlaceholder);
  prompt.replace(x, kSubjectPlaceholder.size(), subject_label);
  if (!isValidCloze(prompt)) {
    throw KbError(ErrorKind::kValidation, "subject label produces an invalid prompt: " + prompt);
  }
  return ClozeQuery{std::move(key), std::move(prompt)};
}

std::vector<Prediction> validatePredictions(std::vector<Prediction> predictions, std::size_t k) {
  if (predictions.size() > k) {
    throw KbError(ErrorKind::kProtocol, "backend returned " + std::to_string(predictions.size()) +
                                            " predictions for k=" + std::to_string(k));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& p = predictions[i];
    p.rank = static_cast<int>(i) + 1;
    if (!(p.probability >= 0.0 && p.probability <= 1.0)) {
      throw KbError(ErrorKind::kProtocol, "probability out of [0,1] for token '" + p.token + "'");
    }
    if (i > 0 && p.probability > predictions[i - 1].probability) {
      throw KbError(ErrorKind::kProtocol, "predictions not sorted by probability");
    }
    total += p.probability;
  }
  if (total > 1.0 + kProbabilitySlack) {
    throw KbError(ErrorKind::kProtocol, "prediction mass exceeds 1");
  }
  return predictions;
}

bool inVocab(Backend& backend, const std::string& label) {
  auto tokens = backend.tokenize(label);
  if (tokens.size() != 1) return false;
  // A lone unknown-word token is not a vocabulary hit.
  return tokens[0] != "[UNK]";
}

bool VocabOracle::operator()(std::string_view label) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(label); it != cache_.end()) return it->second;
  }
  bool answer = inVocab(backend_, std::string(label));
  std::lock_guard lock(mu_);
  cache_.emplace(std::string(label), answer);
  return answer;
}

// --- mock backend ------------------------------------------------------------------

MockBackend::MockBackend(std::map<std::string, std::vector<Prediction>> table, Options options)
    : table_(std::move(table)), fallback_(std::move(options.fallback_tokens)), max_k_(options.max_k) {
  for (auto& [prompt, predictions] : table_) {
    if (!isValidCloze(prompt)) throw KbError(ErrorKind::kData, "mock prompt without a single [MASK]: " + prompt);
    auto n = predictions.size();
    predictions = validatePredictions(std::move(predictions), n);
    for (const auto& p : predictions) vocab_.insert(p.token);
  }
  vocab_.insert(fallback_.begin(), fallback_.end());
  vocab_.insert(options.extra_vocab.begin(), options.extra_vocab.end());
}

MockBackend::MockBackend(MockBackend&& other) noexcept
    : table_(std::move(other.table_)),
      fallback_(std::move(other.fallback_)),
      max_k_(other.max_k_),
      vocab_(std::move(other.vocab_)) {}

MockBackend MockBackend::parse(std::istream& in) {
  std::map<std::string, std::vector<Prediction>> table;
  Options options;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw KbError(ErrorKind::kData, "mock table line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (line.front() == '#') {
      if (tab == std::string::npos) continue;
      auto directive = line.substr(0, tab);
      auto items = splitList(std::string_view(line).substr(tab + 1), ',');
      if (directive == "#fallback") {
        options.fallback_tokens.insert(options.fallback_tokens.end(), items.begin(), items.end());
      } else if (directive == "#vocab") {
        options.extra_vocab.insert(options.extra_vocab.end(), items.begin(), items.end());
      }
      continue;
    }
    if (tab == std::string::npos) fail("missing TAB");
    auto prompt = line.substr(0, tab);
    std::vector<Prediction> predictions;
    for (const auto& item : splitList(std::string_view(line).substr(tab + 1), ',')) {
      auto colon = item.rfind(':');
      if (colon == std::string::npos || colon == 0) fail("expected token:prob, got '" + item + "'");
      double p = 0.0;
      try {
        std::size_t used = 0;
        p = std::stod(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1) fail("bad probability in '" + item + "'");
      } catch (const std::logic_error&) {
        fail("bad probability in '" + item + "'");
      }
      predictions.push_back(Prediction{item.substr(0, colon), p, static_cast<int>(predictions.size()) + 1});
    }
    if (!table.emplace(prompt, std::move(predictions)).second) fail("duplicate prompt");
  }
  try {
    return MockBackend(std::move(table), std::move(options));
  } catch (const KbError& e) {
    throw KbError(ErrorKind::kData, std::string("mock table: ") + e.what());
  }
}

MockBackend MockBackend::loadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KbError(ErrorKind::kData, "cannot open mock table " + path);
  return parse(in);
}

BackendDescriptor MockBackend::describe() {
  std::lock_guard lock(mu_);
  return {"mock", vocab_.size(), max_k_};
}

std::vector<Prediction> MockBackend::fillMask(const std::string& prompt, std::size_t k) {
  if (!isValidCloze(prompt)) throw KbError(ErrorKind::kValidation, "prompt needs exactly one [MASK]");
  if (k < 1 || k > max_k_) throw KbError(ErrorKind::kValidation, "k outside [1, max_k]");
  std::vector<Prediction> out;
  if (auto it = table_.find(prompt); it != table_.end()) {
    out.assign(it->second.begin(), it->second.begin() + std::min(k, it->second.size()));
    return out;
  }
  if (fallback_.empty()) return out;
  double uniform = 1.0 / static_cast<double>(fallback_.size());
  for (std::size_t i = 0; i < fallback_.size() && i < k; ++i) {
    out.push_back(Prediction{fallback_[i], uniform, static_cast<int>(i) + 1});
  }
  return out;
}

std::vector<std::string> MockBackend::vocab() {
  std::lock_guard lock(mu_);
  return {vocab_.begin(), vocab_.end()};
}

std::vector<std::string> MockBackend::tokenize(const std::string& text) {
  std::lock_guard lock(mu_);
  std::vector<std::string> tokens;
  if (vocab_.contains(text)) return {text};
  std::istringstream words(text);
  std::string word;
  while (words >> word) {
    if (vocab_.contains(word)) {
      tokens.push_back(word);
      continue;
    }
    std::vector<std::string> pieces;
    std::size_t start = 0;
    bool ok = true;
    while (start < word.size()) {
      std::size_t end = word.size();
      std::string piece;
      for (; end > start; --end) {
        auto candidate = (start > 0 ? "##" : "") + word.substr(start, end - start);
        if (vocab_.contains(candidate)) {
          piece = std::move(candidate);
          break;
        }
      }
      if (piece.empty()) {
        ok = false;
        break;
      }
      pieces.push_back(std::move(piece));
      start = end;
    }
    if (ok) {
      tokens.insert(tokens.end(), pieces.begin(), pieces.end());
    } else {
      tokens.push_back("[UNK]");
    }
  }
  return tokens;
}

void MockBackend::addTokens(const std::vector<std::string>& tokens) {
  std::lock_guard lock(mu_);
  vocab_.insert(tokens.begin(), tokens.end());
}

// --- batch probing ---------------------------------------------------------------

std::vector<ProbeInput> probeInputs(const std::vector<BenchmarkRecord>& records) {
  std::vector<ProbeInput> inputs;
  inputs.reserve(records.size());
  for (const auto& r : records) inputs.push_back({r.key(), r.subject.label.value_or("")});
  return inputs;
}

std::vector<ProbeInput> probeInputs(const std::vector<EntityRef>& subjects, const std::string& relation) {
  std::vector<ProbeInput> inputs;
  inputs.reserve(subjects.size());
  for (const auto& s : subjects) inputs.push_back({{s.id, relation}, s.label.value_or("")});
  return inputs;
}

ProbeResult probeBatch(const std::vector<ProbeInput>& inputs, const std::map<std::string, RelationSpec>& specs,
                       Backend& backend, const ProbeOptions& options) {
  ProbeResult result;
  result.sets.resize(inputs.size());
  if (inputs.empty()) return result;
  if (options.k < 1) throw KbError(ErrorKind::kValidation, "k must be >= 1");
  for (const auto& input : inputs) {
    if (!specs.contains(input.key.relation_id)) {
      throw KbError(ErrorKind::kValidation, "no relation spec for " + input.key.relation_id);
    }
  }
  // A backend that cannot describe itself right now is still probed; its
  // failures then surface per query.
  try {
    auto max_k = backend.describe().max_k;
    if (max_k > 0 && options.k > max_k) {
      throw KbError(ErrorKind::kValidation,
                    "k=" + std::to_string(options.k) + " exceeds backend max_k=" + std::to_string(max_k));
    }
  } catch (const KbError& e) {
    if (e.kind() == ErrorKind::kValidation) throw;
  }
  auto sleep = options.retry.sleep ? options.retry.sleep
                                   : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  std::atomic<std::size_t> failures{0};
  std::atomic<std::size_t> transport_failures{0};
  auto run_one = [&](std::size_t i) {
    const auto& input = inputs[i];
    auto& set = result.sets[i];
    set.key = input.key;
    std::string last_error;
    bool transport = false;
    try {
      auto query = instantiatePrompt(specs.at(input.key.relation_id), input.subject_label, input.key);
      auto backoff = options.retry.initial_backoff;
      for (int attempt = 1; attempt <= std::max(1, options.retry.attempts); ++attempt) {
        try {
          set.predictions = validatePredictions(backend.fillMask(query.prompt, options.k), options.k);
          return;
        } catch (const KbError& e) {
          last_error = std::string(errorKindName(e.kind())) + ": " + e.what();
          transport = e.kind() == ErrorKind::kTransport;
          if (!transport) break;
          if (attempt < options.retry.attempts) {
            sleep(backoff);
            backoff *= 2;
          } else {
            last_error += " (after " + std::to_string(attempt) + " attempts)";
          }
        }
      }
    } catch (const KbError& e) {
      last_error = std::string(errorKindName(e.kind())) + ": " + e.what();
    } catch (const std::exception& e) {
      last_error = std::string("error: ") + e.what();
    }
    set.predictions.clear();
    set.error = last_error;
    ++failures;
    if (transport) ++transport_failures;
  };

  std::size_t window = std::clamp<std::size_t>(options.window, 1, inputs.size());
  if (window == 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < window; ++t) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : threads) t.join();
  }
  result.failures = failures;
  result.transport_failures = transport_failures;
  return result;
}

}  // namespace kbforge::probing
