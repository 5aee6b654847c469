#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kbforge {

inline constexpr std::string_view kSubjectPlaceholder = "[X]";
inline constexpr std::string_view kObjectPlaceholder = "[Y]";
inline constexpr std::string_view kMaskToken = "[MASK]";

struct EntityRef {
  std::string id;
  std::optional<std::string> label;

  friend bool operator==(const EntityRef&, const EntityRef&) = default;
};

struct RelationSpec {
  std::string pid;
  std::string name;
  std::string template_text;
  std::optional<EntityRef> subject_type;
  std::optional<std::string> dictionary_id;

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

// Every violated RelationSpec invariant, in a fixed order. Empty means valid.
std::vector<std::string> validateRelationSpec(const RelationSpec& spec);

struct Triple {
  EntityRef subject;
  std::string relation;
  EntityRef object;

  friend bool operator==(const Triple&, const Triple&) = default;
};

// (subject id, relation id)
struct RecordKey {
  std::string subject_id;
  std::string relation_id;

  std::string str() const { return subject_id + "|" + relation_id; }
  friend auto operator<=>(const RecordKey&, const RecordKey&) = default;
};

struct BenchmarkRecord {
  EntityRef subject;
  std::string relation;
  std::vector<EntityRef> valid_objects;

  RecordKey key() const { return {subject.id, relation}; }
  friend bool operator==(const BenchmarkRecord&, const BenchmarkRecord&) = default;
};

// Throws KbError(kValidation) on the first violated invariant.
void validateRecord(const BenchmarkRecord& record);

struct Prediction {
  std::string token;
  double probability = 0.0;
  int rank = 1;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct PredictionSet {
  RecordKey key;
  std::vector<Prediction> predictions;
  // Set when the query failed after retries; predictions are then empty.
  std::optional<std::string> error;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// Ranks 1..n without gaps, probabilities in [0,1] and non-increasing.
bool isWellOrdered(const std::vector<Prediction>& predictions);

struct ScoredFactCandidate {
  EntityRef subject;
  std::string relation;
  std::string predicted_object;
  double probability = 0.0;

  friend bool operator==(const ScoredFactCandidate&, const ScoredFactCandidate&) = default;
};

enum class AnnotationValue { kTrue, kPlausible, kUnknown, kImplausible, kFalse };

inline constexpr AnnotationValue kAllAnnotationValues[] = {
    AnnotationValue::kTrue, AnnotationValue::kPlausible, AnnotationValue::kUnknown,
    AnnotationValue::kImplausible, AnnotationValue::kFalse};

std::string_view annotationValueName(AnnotationValue value);
std::optional<AnnotationValue> parseAnnotationValue(std::string_view name);
// True and Plausible are the positive side of the binarized scale.
bool isPositive(AnnotationValue value);

struct Vote {
  std::string task_id;
  std::string annotator_id;
  AnnotationValue value = AnnotationValue::kUnknown;
  std::optional<std::string> evidence_url;
  std::optional<std::string> snippet;
  std::optional<std::string> explanation;
  std::int64_t timestamp = 0;  // unix seconds

  friend bool operator==(const Vote&, const Vote&) = default;
};

// nullopt when the vote satisfies the evidence/explanation rules, otherwise
// the rejection reason ("evidence required" / "explanation required").
std::optional<std::string> voteViolation(const Vote& vote);

enum class TaskStatus { kOpen, kDone };

struct AnnotationTask {
  std::string task_id;
  std::string statement;
  ScoredFactCandidate candidate;
  TaskStatus status = TaskStatus::kOpen;

  friend bool operator==(const AnnotationTask&, const AnnotationTask&) = default;
};

// Content hash of (subject, relation, prediction).
std::string makeTaskId(const ScoredFactCandidate& candidate);

struct RelationReport {
  std::string relation;
  std::size_t n_records = 0;
  double r_at_p = 0.0;
  double precision_target = 0.90;
  std::optional<double> threshold_probability;
  double entropy_normalized = 0.0;
  std::size_t unique_objects = 0;
  double single_valuedness = 0.0;
  double vocab_coverage = 0.0;
  double baseline_majority_precision = 0.0;
  double baseline_random_precision = 0.0;
  // Diagnostic only: fraction of records with a valid object anywhere in the
  // returned top-k.
  double hits_at_k = 0.0;

  friend bool operator==(const RelationReport&, const RelationReport&) = default;
};

struct CompletionEstimate {
  std::string relation;
  std::uint64_t cardinality_wd = 0;
  std::uint64_t n_missing = 0;
  double high_acc_fraction = 0.0;
  double accuracy = 0.0;
  std::uint64_t addable = 0;
  double growth_factor = 0.0;

  friend bool operator==(const CompletionEstimate&, const CompletionEstimate&) = default;
};

}  // namespace kbforge
