#include "kbforge/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge::metrics {

using nlohmann::json;

// --- dictionaries ---------------------------------------------------------------

AliasDictionary::AliasDictionary(std::string id, const std::vector<std::vector<std::string>>& groups)
    : id_(std::move(id)) {
  for (const auto& group : groups) {
    std::size_t index = group_count_;
    bool any = false;
    for (const auto& member : group) {
      auto key = normalizeSurface(member);
      if (key.empty()) continue;
      auto [it, inserted] = member_to_group_.emplace(key, index);
      if (!inserted && it->second != index) {
        throw KbError(ErrorKind::kValidation,
                      "dictionary " + id_ + ": '" + member + "' appears in two groups");
      }
      any = true;
    }
    if (any) ++group_count_;
  }
}

AliasDictionary AliasDictionary::parse(std::string id, std::istream& in) {
  std::vector<std::vector<std::string>> groups;
  std::string line;
  while (std::getline(in, line)) {
    auto trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::vector<std::string> group;
    std::size_t start = 0;
    for (;;) {
      auto bar = trimmed.find('|', start);
      group.push_back(trim(std::string_view(trimmed).substr(start, bar - start)));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    groups.push_back(std::move(group));
  }
  return AliasDictionary(std::move(id), groups);
}

AliasDictionary AliasDictionary::loadFile(std::string id, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KbError(ErrorKind::kData, "cannot open dictionary " + path);
  return parse(std::move(id), in);
}

std::optional<std::size_t> AliasDictionary::groupOf(std::string_view surface) const {
  auto it = member_to_group_.find(normalizeSurface(surface));
  if (it == member_to_group_.end()) return std::nullopt;
  return it->second;
}

bool AliasDictionary::sameGroup(std::string_view a, std::string_view b) const {
  auto ga = groupOf(a);
  return ga && ga == groupOf(b);
}

// --- judging --------------------------------------------------------------------

bool judge(std::string_view token, const BenchmarkRecord& record, const AliasDictionary* dictionary) {
  auto normalized = normalizeSurface(token);
  if (normalized.empty()) return false;
  auto token_group = dictionary ? dictionary->groupOf(normalized) : std::nullopt;
  for (const auto& object : record.valid_objects) {
    if (!object.label) continue;
    if (normalizeSurface(*object.label) == normalized) return true;
    if (token_group && dictionary->groupOf(*object.label) == token_group) return true;
  }
  return false;
}

namespace {

std::map<RecordKey, const PredictionSet*> indexPredictions(const std::vector<PredictionSet>& sets) {
  std::map<RecordKey, const PredictionSet*> index;
  for (const auto& set : sets) {
    if (!index.emplace(set.key, &set).second) {
      throw KbError(ErrorKind::kData, "duplicate prediction set for " + set.key.str());
    }
  }
  return index;
}

}  // namespace

std::vector<JudgedPrediction> judgeTopPredictions(const std::vector<BenchmarkRecord>& records,
                                                  const std::vector<PredictionSet>& predictions,
                                                  const AliasDictionary* dictionary) {
  auto index = indexPredictions(predictions);
  std::vector<JudgedPrediction> judged;
  judged.reserve(records.size());
  for (const auto& record : records) {
    JudgedPrediction j{record.key(), std::nullopt, false};
    if (auto it = index.find(record.key()); it != index.end() && !it->second->predictions.empty()) {
      j.top = it->second->predictions.front();
      j.correct = judge(j.top->token, record, dictionary);
    }
    judged.push_back(std::move(j));
  }
  return judged;
}

double hitsAtK(const std::vector<BenchmarkRecord>& records, const std::vector<PredictionSet>& predictions,
               const AliasDictionary* dictionary) {
  if (records.empty()) return 0.0;
  auto index = indexPredictions(predictions);
  std::size_t hits = 0;
  for (const auto& record : records) {
    auto it = index.find(record.key());
    if (it == index.end()) continue;
    for (const auto& p : it->second->predictions) {
      if (judge(p.token, record, dictionary)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

// --- recall at precision --------------------------------------------------------------

RecallAtPrecision recallAtPrecision(std::span<const JudgedPrediction> judged, double target_p,
                                    PrefixRule rule) {
  if (!(target_p > 0.0 && target_p <= 1.0)) {
    throw KbError(ErrorKind::kValidation, "target precision must lie in (0, 1]");
  }
  std::vector<const JudgedPrediction*> ranked;
  ranked.reserve(judged.size());
  for (const auto& j : judged) {
    if (j.top) ranked.push_back(&j);
  }
  std::sort(ranked.begin(), ranked.end(), [](const JudgedPrediction* a, const JudgedPrediction* b) {
    if (a->top->probability != b->top->probability) return a->top->probability > b->top->probability;
    return a->key < b->key;
  });

  std::size_t correct = 0;
  std::size_t best_size = 0;
  std::size_t best_correct = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i]->correct) ++correct;
    double precision = static_cast<double>(correct) / static_cast<double>(i + 1);
    if (precision >= target_p) {
      best_size = i + 1;
      best_correct = correct;
    } else if (rule == PrefixRule::kFirstDip) {
      break;
    }
  }

  RecallAtPrecision result;
  result.prefix_size = best_size;
  if (best_size == 0 || best_correct == 0) {
    result.prefix_size = 0;
    return result;
  }
  result.recall = static_cast<double>(best_correct) / static_cast<double>(judged.size());
  result.threshold_probability = ranked[best_size - 1]->top->probability;
  return result;
}

// --- baselines ------------------------------------------------------------------

namespace {

struct ObjectDistribution {
  std::vector<std::pair<EntityRef, std::uint64_t>> objects;  // ordered by id
  std::uint64_t total = 0;
};

ObjectDistribution objectDistribution(const std::vector<BenchmarkRecord>& records) {
  std::map<std::string, std::pair<EntityRef, std::uint64_t>, bool (*)(std::string_view, std::string_view)>
      counts(idLess);
  ObjectDistribution dist;
  for (const auto& record : records) {
    for (const auto& object : record.valid_objects) {
      auto& slot = counts[object.id];
      if (slot.second == 0) slot.first = object;
      ++slot.second;
      ++dist.total;
    }
  }
  for (auto& [id, entry] : counts) dist.objects.push_back(std::move(entry));
  return dist;
}

bool assignmentCorrect(const EntityRef& assigned, const BenchmarkRecord& record,
                       const AliasDictionary* dictionary) {
  for (const auto& object : record.valid_objects) {
    if (object.id == assigned.id) return true;
  }
  return assigned.label && judge(*assigned.label, record, dictionary);
}

}  // namespace

BaselineResult majorityBaseline(const std::vector<BenchmarkRecord>& records,
                                const AliasDictionary* dictionary) {
  if (records.empty()) return {};
  auto dist = objectDistribution(records);
  const EntityRef* best = nullptr;
  std::uint64_t best_count = 0;
  for (const auto& [object, count] : dist.objects) {
    if (count > best_count) {
      best = &object;
      best_count = count;
    }
  }
  std::size_t correct = 0;
  for (const auto& record : records) correct += assignmentCorrect(*best, record, dictionary);
  double precision = static_cast<double>(correct) / static_cast<double>(records.size());
  return {precision, precision};
}

BaselineResult randomBaseline(const std::vector<BenchmarkRecord>& records, std::uint64_t seed,
                              const AliasDictionary* dictionary) {
  if (records.empty()) return {};
  auto dist = objectDistribution(records);
  std::size_t correct = 0;
  for (const auto& record : records) {
    // Per-record draw keyed by (seed, record) so the result is independent of
    // record order.
    auto draw = samplingKey(seed, record.subject.id, record.relation) % dist.total;
    std::uint64_t cumulative = 0;
    for (const auto& [object, count] : dist.objects) {
      cumulative += count;
      if (draw < cumulative) {
        correct += assignmentCorrect(object, record, dictionary);
        break;
      }
    }
  }
  double precision = static_cast<double>(correct) / static_cast<double>(records.size());
  return {precision, precision};
}

double expectedRandomPrecision(const std::vector<BenchmarkRecord>& records,
                               const AliasDictionary* dictionary) {
  if (records.empty()) return 0.0;
  auto dist = objectDistribution(records);
  double expected = 0.0;
  for (const auto& record : records) {
    for (const auto& [object, count] : dist.objects) {
      if (assignmentCorrect(object, record, dictionary)) {
        expected += static_cast<double>(count) / static_cast<double>(dist.total);
      }
    }
  }
  return expected / static_cast<double>(records.size());
}

// --- features ---------------------------------------------------------------------

double normalizedEntropy(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  std::size_t outcomes = 0;
  for (auto c : counts) {
    total += c;
    if (c > 0) ++outcomes;
  }
  if (outcomes <= 1) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::clamp(h / std::log2(static_cast<double>(outcomes)), 0.0, 1.0);
}

RelationFeatures relationFeatures(const std::vector<BenchmarkRecord>& records,
                                  const std::function<bool(std::string_view)>& in_vocab) {
  RelationFeatures features;
  if (records.empty()) return features;
  auto dist = objectDistribution(records);
  std::vector<std::uint64_t> counts;
  std::set<std::string> labels;
  for (const auto& [object, count] : dist.objects) {
    counts.push_back(count);
    if (object.label) labels.insert(*object.label);
  }
  features.entropy_normalized = normalizedEntropy(counts);
  features.unique_objects = dist.objects.size();
  std::size_t single = 0;
  for (const auto& record : records) single += record.valid_objects.size() == 1;
  features.single_valuedness = static_cast<double>(single) / static_cast<double>(records.size());
  if (!labels.empty()) {
    std::size_t covered = 0;
    for (const auto& label : labels) covered += in_vocab(label);
    features.vocab_coverage = static_cast<double>(covered) / static_cast<double>(labels.size());
  }
  return features;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw KbError(ErrorKind::kValidation, "pearson: length mismatch");
  if (x.size() < 2) throw KbError(ErrorKind::kValidation, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw KbError(ErrorKind::kValidation, "undefined correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// --- reports ----------------------------------------------------------------------

RelationReport buildRelationReport(const ReportInputs& inputs) {
  auto rap = recallAtPrecision(inputs.judged, inputs.target_p, inputs.rule);
  RelationReport report;
  report.relation = inputs.relation;
  report.n_records = inputs.judged.size();
  report.r_at_p = rap.recall;
  report.precision_target = inputs.target_p;
  report.threshold_probability = rap.threshold_probability;
  report.entropy_normalized = inputs.features.entropy_normalized;
  report.unique_objects = inputs.features.unique_objects;
  report.single_valuedness = inputs.features.single_valuedness;
  report.vocab_coverage = inputs.features.vocab_coverage;
  report.baseline_majority_precision = inputs.majority.precision;
  report.baseline_random_precision = inputs.random.precision;
  report.hits_at_k = inputs.hits_at_k;
  return report;
}

std::string serializeReport(const RelationReport& r) {
  json doc{{"relation", r.relation},
           {"n_records", r.n_records},
           {"r_at_p", r.r_at_p},
           {"precision_target", r.precision_target},
           {"threshold_probability", r.threshold_probability ? json(*r.threshold_probability) : json()},
           {"entropy_normalized", r.entropy_normalized},
           {"unique_objects", r.unique_objects},
           {"single_valuedness", r.single_valuedness},
           {"vocab_coverage", r.vocab_coverage},
           {"baseline_majority_precision", r.baseline_majority_precision},
           {"baseline_random_precision", r.baseline_random_precision},
           {"hits_at_k", r.hits_at_k}};
  return doc.dump(2) + "\n";
}

RelationReport parseReport(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw KbError(ErrorKind::kData, "report is not a JSON object");
  try {
    RelationReport r;
    r.relation = doc.at("relation").get<std::string>();
    r.n_records = doc.at("n_records").get<std::size_t>();
    r.r_at_p = doc.at("r_at_p").get<double>();
    r.precision_target = doc.at("precision_target").get<double>();
    if (!doc.at("threshold_probability").is_null()) {
      r.threshold_probability = doc.at("threshold_probability").get<double>();
    }
    r.entropy_normalized = doc.at("entropy_normalized").get<double>();
    r.unique_objects = doc.at("unique_objects").get<std::size_t>();
    r.single_valuedness = doc.at("single_valuedness").get<double>();
    r.vocab_coverage = doc.at("vocab_coverage").get<double>();
    r.baseline_majority_precision = doc.at("baseline_majority_precision").get<double>();
    r.baseline_random_precision = doc.at("baseline_random_precision").get<double>();
    r.hits_at_k = doc.value("hits_at_k", 0.0);
    if ((r.r_at_p == 0.0) != !r.threshold_probability.has_value()) {
      throw KbError(ErrorKind::kData, "report " + r.relation + ": threshold must be absent iff r_at_p is 0");
    }
    return r;
  } catch (const json::exception& e) {
    throw KbError(ErrorKind::kData, std::string("malformed report: ") + e.what());
  }
}

std::string formatReportTable(const std::vector<RelationReport>& reports,
                              const std::map<std::string, std::string>& relation_names) {
  auto fixed = [](double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "relation\tname\tn_records\tR@P\tthreshold\tmajority\trandom\tentropy\tunique_objects\t"
         "single_valuedness\tvocab_coverage\thits_at_k\n";
  double sum_rap = 0, sum_major = 0, sum_random = 0;
  for (const auto& r : reports) {
    auto name = relation_names.find(r.relation);
    out << r.relation << '\t' << (name == relation_names.end() ? r.relation : name->second) << '\t'
        << r.n_records << '\t' << fixed(r.r_at_p, 2) << '\t'
        << (r.threshold_probability ? fixed(*r.threshold_probability, 4) : std::string("-")) << '\t'
        << fixed(r.baseline_majority_precision, 2) << '\t' << fixed(r.baseline_random_precision, 2) << '\t'
        << fixed(r.entropy_normalized, 2) << '\t' << r.unique_objects << '\t'
        << fixed(r.single_valuedness, 2) << '\t' << fixed(r.vocab_coverage, 2) << '\t'
        << fixed(r.hits_at_k, 2) << '\n';
    sum_rap += r.r_at_p;
    sum_major += r.baseline_majority_precision;
    sum_random += r.baseline_random_precision;
  }
  if (!reports.empty()) {
    double n = static_cast<double>(reports.size());
    out << "AVG\t-\t-\t" << fixed(sum_rap / n, 2) << "\t-\t" << fixed(sum_major / n, 2) << '\t'
        << fixed(sum_random / n, 2) << "\t-\t-\t-\t-\t-\n";
  }
  return out.str();
}

}  // namespace kbforge::metrics
