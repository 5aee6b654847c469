#include "kbforge/kbcore/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge {

using nlohmann::json;

namespace {

constexpr std::string_view kMetaPrefix = "#meta ";

[[noreturn]] void dataError(std::size_t line_no, const std::string& what) {
  throw KbError(ErrorKind::kData, "line " + std::to_string(line_no) + ": " + what);
}

json parseLine(std::size_t line_no, std::string_view line) {
  json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) dataError(line_no, "not a JSON object");
  return doc;
}

std::string requireString(std::size_t line_no, const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) {
    dataError(line_no, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> optionalString(std::size_t line_no, const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) dataError(line_no, std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

double requireProbability(std::size_t line_no, const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_number()) {
    dataError(line_no, std::string("missing numeric field '") + key + "'");
  }
  double p = it->get<double>();
  if (!(p >= 0.0 && p <= 1.0)) dataError(line_no, "probability out of [0,1]");
  return p;
}

json metaToJson(const ArtifactMeta& meta) {
  return json{{"config_hash", meta.config_hash}, {"seed", meta.seed}, {"producer", meta.producer}};
}

void writeJsonLine(std::ostream& out, const json& doc) {
  out << doc.dump(-1, ' ', /*ensure_ascii=*/false) << '\n';
}

}  // namespace

void writeHeader(std::ostream& out, const std::optional<ArtifactMeta>& meta) {
  out << kFormatHeader << '\n';
  if (meta) {
    out << kMetaPrefix << metaToJson(*meta).dump() << '\n';
  }
}

void readLineDocument(std::istream& in, std::optional<ArtifactMeta>& meta,
                      const std::function<void(std::size_t, std::string_view)>& on_line) {
  if (!in) throw KbError(ErrorKind::kData, "unreadable stream");
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != kFormatHeader) {
        dataError(line_no, "expected header '" + std::string(kFormatHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.starts_with(kMetaPrefix)) {
      json doc = parseLine(line_no, std::string_view(line).substr(kMetaPrefix.size()));
      ArtifactMeta m;
      m.config_hash = requireString(line_no, doc, "config_hash");
      if (!doc.contains("seed") || !doc["seed"].is_number_unsigned()) {
        dataError(line_no, "meta seed missing");
      }
      m.seed = doc["seed"].get<std::uint64_t>();
      m.producer = optionalString(line_no, doc, "producer").value_or("");
      meta = std::move(m);
      continue;
    }
    if (line.front() == '#') continue;
    on_line(line_no, line);
  }
  if (in.bad()) throw KbError(ErrorKind::kData, "read error");
}

// --- benchmark ---------------------------------------------------------------

void writeBenchmark(std::ostream& out, const std::vector<BenchmarkRecord>& records,
                    const std::optional<ArtifactMeta>& meta) {
  writeHeader(out, meta);
  for (const auto& record : records) {
    validateRecord(record);
    json objects = json::array();
    for (const auto& object : record.valid_objects) {
      objects.push_back(json{{"id", object.id}, {"label", *object.label}});
    }
    json doc{{"subject_id", record.subject.id},
             {"relation_id", record.relation},
             {"objects", std::move(objects)}};
    if (record.subject.label) doc["subject_label"] = *record.subject.label;
    writeJsonLine(out, doc);
  }
}

std::string serializeBenchmark(const std::vector<BenchmarkRecord>& records,
                               const std::optional<ArtifactMeta>& meta) {
  std::ostringstream out;
  writeBenchmark(out, records, meta);
  return out.str();
}

Document<BenchmarkRecord> parseBenchmark(std::istream& in) {
  Document<BenchmarkRecord> result;
  std::map<RecordKey, std::size_t> first_seen;
  readLineDocument(in, result.meta, [&](std::size_t line_no, std::string_view line) {
    json doc = parseLine(line_no, line);
    BenchmarkRecord record;
    record.subject.id = requireString(line_no, doc, "subject_id");
    record.subject.label = optionalString(line_no, doc, "subject_label");
    record.relation = requireString(line_no, doc, "relation_id");
    auto objects = doc.find("objects");
    if (objects == doc.end() || !objects->is_array()) dataError(line_no, "missing array 'objects'");
    for (const auto& object : *objects) {
      if (!object.is_object()) dataError(line_no, "object entry is not a JSON object");
      record.valid_objects.push_back(
          EntityRef{requireString(line_no, object, "id"), optionalString(line_no, object, "label")});
    }
    try {
      validateRecord(record);
    } catch (const KbError& e) {
      dataError(line_no, e.what());
    }
    auto [it, inserted] = first_seen.emplace(record.key(), line_no);
    if (!inserted) {
      dataError(line_no, "duplicate (subject, relation) " + record.key().str() +
                             " first seen on line " + std::to_string(it->second));
    }
    result.items.push_back(std::move(record));
  });
  return result;
}

Document<BenchmarkRecord> parseBenchmark(std::string_view text) {
  if (text.empty()) return {};
  std::istringstream in{std::string(text)};
  return parseBenchmark(in);
}

// --- relation specs -----------------------------------------------------------

void writeRelationSpecs(std::ostream& out, const std::vector<RelationSpec>& specs) {
  writeHeader(out, std::nullopt);
  for (const auto& spec : specs) {
    json doc{{"pid", spec.pid}, {"name", spec.name}, {"template", spec.template_text}};
    if (spec.subject_type) {
      json type{{"id", spec.subject_type->id}};
      if (spec.subject_type->label) type["label"] = *spec.subject_type->label;
      doc["subject_type"] = std::move(type);
    }
    if (spec.dictionary_id) doc["dictionary_id"] = *spec.dictionary_id;
    writeJsonLine(out, doc);
  }
}

std::vector<RelationSpec> parseRelationSpecs(std::istream& in) {
  std::vector<RelationSpec> specs;
  std::optional<ArtifactMeta> meta;
  std::vector<std::string> problems;
  readLineDocument(in, meta, [&](std::size_t line_no, std::string_view line) {
    json doc = parseLine(line_no, line);
    RelationSpec spec;
    spec.pid = requireString(line_no, doc, "pid");
    spec.name = requireString(line_no, doc, "name");
    spec.template_text = requireString(line_no, doc, "template");
    if (auto it = doc.find("subject_type"); it != doc.end() && !it->is_null()) {
      if (it->is_string()) {
        spec.subject_type = EntityRef{it->get<std::string>(), std::nullopt};
      } else if (it->is_object()) {
        spec.subject_type =
            EntityRef{requireString(line_no, *it, "id"), optionalString(line_no, *it, "label")};
      } else {
        dataError(line_no, "subject_type must be a string or object");
      }
    }
    spec.dictionary_id = optionalString(line_no, doc, "dictionary_id");
    for (const auto& e : validateRelationSpec(spec)) {
      problems.push_back("line " + std::to_string(line_no) + " (" + spec.pid + "): " + e);
    }
    for (const auto& other : specs) {
      if (other.pid == spec.pid) {
        problems.push_back("line " + std::to_string(line_no) + ": duplicate pid " + spec.pid);
      }
    }
    specs.push_back(std::move(spec));
  });
  if (!problems.empty()) {
    std::string message = "invalid relation specs:";
    for (const auto& p : problems) message += "\n  " + p;
    throw KbError(ErrorKind::kValidation, message);
  }
  return specs;
}

// --- candidates ---------------------------------------------------------------

void writeCandidates(std::ostream& out, const std::vector<ScoredFactCandidate>& candidates,
                     const std::optional<ArtifactMeta>& meta) {
  writeHeader(out, meta);
  for (const auto& c : candidates) {
    json doc{{"subject_id", c.subject.id},
             {"relation_id", c.relation},
             {"predicted_object", c.predicted_object},
             {"probability", c.probability}};
    if (c.subject.label) doc["subject_label"] = *c.subject.label;
    writeJsonLine(out, doc);
  }
}

Document<ScoredFactCandidate> parseCandidates(std::istream& in) {
  Document<ScoredFactCandidate> result;
  readLineDocument(in, result.meta, [&](std::size_t line_no, std::string_view line) {
    json doc = parseLine(line_no, line);
    ScoredFactCandidate c;
    c.subject.id = requireString(line_no, doc, "subject_id");
    c.subject.label = optionalString(line_no, doc, "subject_label");
    c.relation = requireString(line_no, doc, "relation_id");
    c.predicted_object = requireString(line_no, doc, "predicted_object");
    c.probability = requireProbability(line_no, doc, "probability");
    if (!isEntityId(c.subject.id) || !isPropertyId(c.relation)) {
      dataError(line_no, "malformed subject or relation id");
    }
    result.items.push_back(std::move(c));
  });
  return result;
}

// --- prediction sets -----------------------------------------------------------

void writePredictionSets(std::ostream& out, const std::vector<PredictionSet>& sets,
                         const std::optional<ArtifactMeta>& meta) {
  writeHeader(out, meta);
  for (const auto& set : sets) {
    json predictions = json::array();
    for (const auto& p : set.predictions) {
      predictions.push_back(json{{"token", p.token}, {"probability", p.probability}});
    }
    json doc{{"subject_id", set.key.subject_id},
             {"relation_id", set.key.relation_id},
             {"predictions", std::move(predictions)}};
    if (set.error) doc["error"] = *set.error;
    writeJsonLine(out, doc);
  }
}

Document<PredictionSet> parsePredictionSets(std::istream& in) {
  Document<PredictionSet> result;
  readLineDocument(in, result.meta, [&](std::size_t line_no, std::string_view line) {
    json doc = parseLine(line_no, line);
    PredictionSet set;
    set.key.subject_id = requireString(line_no, doc, "subject_id");
    set.key.relation_id = requireString(line_no, doc, "relation_id");
    set.error = optionalString(line_no, doc, "error");
    auto predictions = doc.find("predictions");
    if (predictions == doc.end() || !predictions->is_array()) {
      dataError(line_no, "missing array 'predictions'");
    }
    int rank = 1;
    for (const auto& p : *predictions) {
      if (!p.is_object()) dataError(line_no, "prediction is not a JSON object");
      set.predictions.push_back(
          Prediction{requireString(line_no, p, "token"), requireProbability(line_no, p, "probability"),
                     rank++});
    }
    if (!isWellOrdered(set.predictions)) dataError(line_no, "predictions not ranked by probability");
    result.items.push_back(std::move(set));
  });
  return result;
}

// --- misc ---------------------------------------------------------------------

std::string formatProbability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", p);
  return buf;
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KbError(ErrorKind::kData, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void writeFileAtomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw KbError(ErrorKind::kData, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw KbError(ErrorKind::kData, "short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace kbforge
