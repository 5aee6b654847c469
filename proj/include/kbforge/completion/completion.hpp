#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbforge/kbcore/io.hpp"
#include "kbforge/kbcore/types.hpp"

namespace kbforge::completion {

inline constexpr std::size_t kDefaultReviewSample = 50;

struct ThresholdProfile {
  std::string relation;
  double threshold_probability = 0.0;
  double target_precision = 0.90;
  std::string source_eval_id;  // identifies the report the threshold came from

  friend bool operator==(const ThresholdProfile&, const ThresholdProfile&) = default;
};

// Copies the report's threshold. A relation without recall at the target
// precision cannot be calibrated: KbError(kData) "no calibratable threshold".
ThresholdProfile calibrate(const RelationReport& report, std::string source_eval_id);

void writeProfiles(std::ostream& out, const std::vector<ThresholdProfile>& profiles,
                   const std::optional<ArtifactMeta>& meta = std::nullopt);
Document<ThresholdProfile> parseProfiles(std::istream& in);

// Top-1 prediction of every non-empty set as a candidate. `subjects` supplies
// labels by subject id; unknown ids keep an unlabelled subject.
std::vector<ScoredFactCandidate> topCandidates(const std::vector<PredictionSet>& sets,
                                               const std::map<std::string, std::string>& subject_labels);

struct FilterResult {
  std::vector<ScoredFactCandidate> retained;
  double high_acc_fraction = 0.0;  // |retained| / |input|, 0 for empty input
};

// Keeps candidates with probability >= threshold, in input order. Throws
// KbError(kValidation) for a candidate of another relation.
FilterResult filterHighAccuracy(const std::vector<ScoredFactCandidate>& candidates, const ThresholdProfile& profile);

// Statement for human review: the spec's template with [X] and [Y] filled in
// and the trailing " ." of cloze templates dropped.
std::string verbalize(const ScoredFactCandidate& candidate, const RelationSpec& spec);

// Every (subject label, object) pair that verbalizes to `statement` under
// `spec`. Several when a literal template piece also occurs inside a label.
std::vector<std::pair<std::string, std::string>> parseStatement(const std::string& statement,
                                                                const RelationSpec& spec);

// Seeded sample of min(n, |retained|) candidates turned into open tasks, ordered
// by (relation, subject id). `specs` must cover every candidate's relation.
std::vector<AnnotationTask> sampleForReview(const std::vector<ScoredFactCandidate>& retained,
                                            const std::map<std::string, RelationSpec>& specs,
                                            std::size_t n = kDefaultReviewSample, std::uint64_t seed = 0);

void writeTasks(std::ostream& out, const std::vector<AnnotationTask>& tasks,
                const std::optional<ArtifactMeta>& meta = std::nullopt);
Document<AnnotationTask> parseTasks(std::istream& in);

// addable = round(n_missing * high_acc_fraction * accuracy), halves away from
// zero; growth = addable / cardinality_wd.
CompletionEstimate estimateCompletion(const std::string& relation, std::uint64_t cardinality_wd,
                                      std::uint64_t n_missing, double high_acc_fraction, double accuracy);

// TSV with the columns relation, cardinality_wd, missing_facts,
// high_accuracy_pct, accuracy_pct, addable_facts, growth_factor.
std::string formatEstimateTable(const std::vector<CompletionEstimate>& estimates);
std::string formatGrowth(double growth);

}  // namespace kbforge::completion
