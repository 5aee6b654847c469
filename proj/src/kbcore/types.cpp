#include "kbforge/kbcore/types.hpp"

#include <set>

#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge {
namespace {

std::size_t countOccurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

bool hasText(const std::optional<std::string>& s) { return s && !trim(*s).empty(); }

}  // namespace

std::vector<std::string> validateRelationSpec(const RelationSpec& spec) {
  std::vector<std::string> errors;
  if (!isPropertyId(spec.pid)) errors.push_back("invalid property id '" + spec.pid + "'");
  if (trim(spec.name).empty()) errors.push_back("empty name");
  for (auto placeholder : {kSubjectPlaceholder, kObjectPlaceholder}) {
    auto n = countOccurrences(spec.template_text, placeholder);
    if (n == 0) errors.push_back("missing " + std::string(placeholder));
    if (n > 1) errors.push_back("duplicate " + std::string(placeholder));
  }
  if (spec.subject_type && !isEntityId(spec.subject_type->id)) {
    errors.push_back("invalid subject_type '" + spec.subject_type->id + "'");
  }
  if (spec.dictionary_id && trim(*spec.dictionary_id).empty()) {
    errors.push_back("empty dictionary_id");
  }
  return errors;
}

void validateRecord(const BenchmarkRecord& record) {
  auto fail = [&](const std::string& what) {
    throw KbError(ErrorKind::kValidation,
                  "record " + record.subject.id + "/" + record.relation + ": " + what);
  };
  if (!isEntityId(record.subject.id)) fail("subject id is not an entity id");
  if (record.subject.label && trim(*record.subject.label).empty()) fail("blank subject label");
  if (!isPropertyId(record.relation)) fail("relation id is not a property id");
  if (record.valid_objects.empty()) fail("no valid objects");
  std::set<std::string> seen;
  for (const auto& object : record.valid_objects) {
    if (!isEntityId(object.id)) fail("object id '" + object.id + "' is not an entity id");
    if (!object.label || trim(*object.label).empty()) fail("object " + object.id + " has no label");
    if (!seen.insert(object.id).second) fail("duplicate object " + object.id);
  }
}

bool isWellOrdered(const std::vector<Prediction>& predictions) {
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (p.rank != static_cast<int>(i) + 1) return false;
    if (!(p.probability >= 0.0 && p.probability <= 1.0)) return false;
    if (i > 0 && p.probability > predictions[i - 1].probability) return false;
  }
  return true;
}

std::string_view annotationValueName(AnnotationValue value) {
  switch (value) {
    case AnnotationValue::kTrue: return "true";
    case AnnotationValue::kPlausible: return "plausible";
    case AnnotationValue::kUnknown: return "unknown";
    case AnnotationValue::kImplausible: return "implausible";
    case AnnotationValue::kFalse: return "false";
  }
  return "unknown";
}

std::optional<AnnotationValue> parseAnnotationValue(std::string_view name) {
  for (auto value : kAllAnnotationValues) {
    if (annotationValueName(value) == name) return value;
  }
  return std::nullopt;
}

bool isPositive(AnnotationValue value) {
  return value == AnnotationValue::kTrue || value == AnnotationValue::kPlausible;
}

std::optional<std::string> voteViolation(const Vote& vote) {
  if (vote.value == AnnotationValue::kUnknown) {
    if (!hasText(vote.explanation)) return "explanation required";
    return std::nullopt;
  }
  if (!hasText(vote.evidence_url) || !hasText(vote.snippet)) return "evidence required";
  return std::nullopt;
}

std::string makeTaskId(const ScoredFactCandidate& candidate) {
  return "t" + toHex(stableHash({candidate.subject.id, candidate.relation,
                                 candidate.predicted_object}));
}

}  // namespace kbforge
