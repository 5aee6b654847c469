#include "kbforge/completion/completion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"
#include "kbforge/kbcore/sampling.hpp"

namespace kbforge::completion {

using nlohmann::json;

namespace {

void writeJsonLine(std::ostream& out, const json& doc) { out << doc.dump(-1, ' ', false) << '\n'; }

// Parses one artifact line, mapping any JSON shape problem to a line-numbered
// data error.
template <typename F>
auto fromLine(std::size_t line_no, std::string_view line, F&& convert) {
  try {
    return convert(json::parse(line));
  } catch (const json::exception& e) {
    throw KbError(ErrorKind::kData, "line " + std::to_string(line_no) + ": " + e.what());
  } catch (const KbError& e) {
    throw KbError(ErrorKind::kData, "line " + std::to_string(line_no) + ": " + e.what());
  }
}

std::string stripClozeEnd(std::string text) {
  while (!text.empty() && text.back() == ' ') text.pop_back();
  if (text.size() >= 2 && text.ends_with(" .")) text.resize(text.size() - 2);
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

void checkFraction(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw KbError(ErrorKind::kValidation, std::string(name) + " must be in [0,1]");
  }
}

json candidateJson(const ScoredFactCandidate& c) {
  json doc{{"subject_id", c.subject.id},
           {"relation_id", c.relation},
           {"predicted_object", c.predicted_object},
           {"probability", c.probability}};
  if (c.subject.label) doc["subject_label"] = *c.subject.label;
  return doc;
}

ScoredFactCandidate candidateFromJson(const json& doc) {
  ScoredFactCandidate c;
  c.subject.id = doc.at("subject_id").get<std::string>();
  if (doc.contains("subject_label")) c.subject.label = doc.at("subject_label").get<std::string>();
  c.relation = doc.at("relation_id").get<std::string>();
  c.predicted_object = doc.at("predicted_object").get<std::string>();
  c.probability = doc.at("probability").get<double>();
  return c;
}

}  // namespace

ThresholdProfile calibrate(const RelationReport& report, std::string source_eval_id) {
  if (report.r_at_p <= 0.0 || !report.threshold_probability) {
    throw KbError(ErrorKind::kData, "relation " + report.relation +
                                        ": no calibratable threshold (zero recall at precision " +
                                        formatProbability(report.precision_target) +
                                        "); the relation is unusable for completion");
  }
  return {report.relation, *report.threshold_probability, report.precision_target, std::move(source_eval_id)};
}

void writeProfiles(std::ostream& out, const std::vector<ThresholdProfile>& profiles,
                   const std::optional<ArtifactMeta>& meta) {
  writeHeader(out, meta);
  for (const auto& p : profiles) {
    writeJsonLine(out, json{{"relation", p.relation},
                            {"threshold_probability", p.threshold_probability},
                            {"target_precision", p.target_precision},
                            {"source_eval_id", p.source_eval_id}});
  }
}

Document<ThresholdProfile> parseProfiles(std::istream& in) {
  Document<ThresholdProfile> result;
  readLineDocument(in, result.meta, [&](std::size_t line_no, std::string_view line) {
    result.items.push_back(fromLine(line_no, line, [](const json& doc) {
      ThresholdProfile p{doc.at("relation").get<std::string>(), doc.at("threshold_probability").get<double>(),
                         doc.at("target_precision").get<double>(), doc.at("source_eval_id").get<std::string>()};
      if (!isPropertyId(p.relation)) throw KbError(ErrorKind::kData, "invalid relation id");
      checkFraction(p.threshold_probability, "threshold_probability");
      return p;
    }));
  });
  return result;
}

std::vector<ScoredFactCandidate> topCandidates(const std::vector<PredictionSet>& sets,
                                               const std::map<std::string, std::string>& subject_labels) {
  std::vector<ScoredFactCandidate> out;
  for (const auto& set : sets) {
    if (set.predictions.empty()) continue;
    ScoredFactCandidate c;
    c.subject.id = set.key.subject_id;
    if (auto it = subject_labels.find(set.key.subject_id); it != subject_labels.end()) c.subject.label = it->second;
    c.relation = set.key.relation_id;
    c.predicted_object = set.predictions.front().token;
    c.probability = set.predictions.front().probability;
    out.push_back(std::move(c));
  }
  return out;
}

FilterResult filterHighAccuracy(const std::vector<ScoredFactCandidate>& candidates, const ThresholdProfile& profile) {
  FilterResult result;
  for (const auto& c : candidates) {
    if (c.relation != profile.relation) {
      throw KbError(ErrorKind::kValidation, "candidate " + c.subject.id + " is for " + c.relation +
                                                ", profile is for " + profile.relation);
    }
    if (c.probability >= profile.threshold_probability) result.retained.push_back(c);
  }
  if (!candidates.empty()) {
    result.high_acc_fraction = static_cast<double>(result.retained.size()) / static_cast<double>(candidates.size());
  }
  return result;
}

std::string verbalize(const ScoredFactCandidate& candidate, const RelationSpec& spec) {
  if (trim(candidate.predicted_object).empty()) throw KbError(ErrorKind::kValidation, "empty predicted object");
  if (!candidate.subject.label || trim(*candidate.subject.label).empty()) {
    throw KbError(ErrorKind::kValidation, "subject " + candidate.subject.id + " has no label");
  }
  const auto& t = spec.template_text;
  auto x = t.find(kSubjectPlaceholder);
  auto y = t.find(kObjectPlaceholder);
  if (x == std::string::npos || y == std::string::npos) {
    throw KbError(ErrorKind::kValidation, "template of " + spec.pid + " lacks [X] or [Y]");
  }
  // Substitute by position so labels containing placeholders stay literal.
  std::string out;
  auto first = std::min(x, y), second = std::max(x, y);
  auto fill = [&](std::size_t pos) {
    return pos == x ? *candidate.subject.label : candidate.predicted_object;
  };
  out += t.substr(0, first);
  out += fill(first);
  out += t.substr(first + 3, second - first - 3);
  out += fill(second);
  out += t.substr(second + 3);
  return stripClozeEnd(std::move(out));
}

std::vector<std::pair<std::string, std::string>> parseStatement(const std::string& statement,
                                                                const RelationSpec& spec) {
  const auto& t = spec.template_text;
  auto x = t.find(kSubjectPlaceholder);
  auto y = t.find(kObjectPlaceholder);
  std::vector<std::pair<std::string, std::string>> out;
  if (x == std::string::npos || y == std::string::npos) return out;
  auto first = std::min(x, y), second = std::max(x, y);
  std::string head = t.substr(0, first);
  std::string middle = t.substr(first + 3, second - first - 3);
  std::string tail = stripClozeEnd("." + t.substr(second + 3)).substr(1);
  if (!statement.starts_with(head) || !statement.ends_with(tail) || statement.size() < head.size() + tail.size()) {
    return out;
  }
  std::string_view body(statement);
  body = body.substr(head.size(), body.size() - head.size() - tail.size());
  for (auto pos = body.find(middle); pos != std::string_view::npos; pos = body.find(middle, pos + 1)) {
    std::string a(body.substr(0, pos));
    std::string b(body.substr(pos + middle.size()));
    if (a.empty() || b.empty()) continue;
    ScoredFactCandidate probe;
    probe.subject.label = x < y ? a : b;
    probe.predicted_object = x < y ? b : a;
    // The tail strip is lossy ("... [Y] ." vs "... [Y]"), so confirm.
    if (verbalize(probe, spec) == statement) out.emplace_back(*probe.subject.label, probe.predicted_object);
    if (middle.empty()) break;
  }
  return out;
}

std::vector<AnnotationTask> sampleForReview(const std::vector<ScoredFactCandidate>& retained,
                                            const std::map<std::string, RelationSpec>& specs, std::size_t n,
                                            std::uint64_t seed) {
  if (n < 1) throw KbError(ErrorKind::kValidation, "review sample size must be >= 1");
  BoundedSelection<const ScoredFactCandidate*> selection(n);
  for (const auto& c : retained) {
    selection.offer(samplingKey(seed, c.subject.id, c.relation), c.subject.id + "|" + c.relation, &c);
  }
  std::vector<AnnotationTask> tasks;
  for (auto& entry : std::move(selection).take()) {
    const auto& c = *entry.value;
    auto spec = specs.find(c.relation);
    if (spec == specs.end()) throw KbError(ErrorKind::kValidation, "no relation spec for " + c.relation);
    tasks.push_back(AnnotationTask{makeTaskId(c), verbalize(c, spec->second), c, TaskStatus::kOpen});
  }
  std::sort(tasks.begin(), tasks.end(), [](const AnnotationTask& a, const AnnotationTask& b) {
    if (a.candidate.relation != b.candidate.relation) return idLess(a.candidate.relation, b.candidate.relation);
    if (a.candidate.subject.id != b.candidate.subject.id) {
      return idLess(a.candidate.subject.id, b.candidate.subject.id);
    }
    return a.task_id < b.task_id;
  });
  return tasks;
}

void writeTasks(std::ostream& out, const std::vector<AnnotationTask>& tasks, const std::optional<ArtifactMeta>& meta) {
  writeHeader(out, meta);
  for (const auto& t : tasks) {
    writeJsonLine(out, json{{"task_id", t.task_id},
                            {"statement", t.statement},
                            {"candidate", candidateJson(t.candidate)},
                            {"status", t.status == TaskStatus::kOpen ? "open" : "done"}});
  }
}

Document<AnnotationTask> parseTasks(std::istream& in) {
  Document<AnnotationTask> result;
  readLineDocument(in, result.meta, [&](std::size_t line_no, std::string_view line) {
    result.items.push_back(fromLine(line_no, line, [](const json& doc) {
      AnnotationTask t;
      t.task_id = doc.at("task_id").get<std::string>();
      t.statement = doc.at("statement").get<std::string>();
      t.candidate = candidateFromJson(doc.at("candidate"));
      auto status = doc.value("status", std::string("open"));
      if (status != "open" && status != "done") throw KbError(ErrorKind::kData, "bad task status");
      t.status = status == "open" ? TaskStatus::kOpen : TaskStatus::kDone;
      return t;
    }));
  });
  return result;
}

CompletionEstimate estimateCompletion(const std::string& relation, std::uint64_t cardinality_wd,
                                      std::uint64_t n_missing, double high_acc_fraction, double accuracy) {
  if (cardinality_wd == 0) throw KbError(ErrorKind::kValidation, "cardinality_wd must be > 0");
  checkFraction(high_acc_fraction, "high_acc_fraction");
  checkFraction(accuracy, "accuracy");
  CompletionEstimate e;
  e.relation = relation;
  e.cardinality_wd = cardinality_wd;
  e.n_missing = n_missing;
  e.high_acc_fraction = high_acc_fraction;
  e.accuracy = accuracy;
  long double product = static_cast<long double>(n_missing) * high_acc_fraction * accuracy;
  e.addable = static_cast<std::uint64_t>(std::llround(product));
  e.growth_factor = static_cast<double>(e.addable) / static_cast<double>(cardinality_wd);
  return e;
}

std::string formatGrowth(double growth) {
  char buf[32];
  if (growth == 0.0 || growth >= 0.01) {
    std::snprintf(buf, sizeof buf, "%.2f", growth);
  } else {
    std::snprintf(buf, sizeof buf, "%.1g", growth);
  }
  return buf;
}

std::string formatEstimateTable(const std::vector<CompletionEstimate>& estimates) {
  std::ostringstream out;
  out << "relation\tcardinality_wd\tmissing_facts\thigh_accuracy_pct\taccuracy_pct\taddable_facts\tgrowth_factor\n";
  auto pct = [](double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", f * 100.0);
    return std::string(buf);
  };
  for (const auto& e : estimates) {
    out << e.relation << '\t' << e.cardinality_wd << '\t' << e.n_missing << '\t' << pct(e.high_acc_fraction) << '\t'
        << pct(e.accuracy) << '\t' << e.addable << '\t' << formatGrowth(e.growth_factor) << '\n';
  }
  return out.str();
}

}  // namespace kbforge::completion
