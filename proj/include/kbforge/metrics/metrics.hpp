#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kbforge/kbcore/types.hpp"

namespace kbforge::metrics {

// trim + case fold + collapse internal whitespace runs to one space.
std::string normalizeSurface(std::string_view text);

class AliasDictionary {
 public:
  AliasDictionary() = default;
  // Groups are normalized on construction; a surface form in two groups is a
  // KbError(kValidation).
  AliasDictionary(std::string id, const std::vector<std::vector<std::string>>& groups);

  // One group per line, members separated by '|'. '#' starts a comment line.
  static AliasDictionary parse(std::string id, std::istream& in);
  static AliasDictionary loadFile(std::string id, const std::string& path);

  const std::string& id() const { return id_; }
  std::size_t groupCount() const { return group_count_; }
  // Group index of a surface form (normalized internally).
  std::optional<std::size_t> groupOf(std::string_view surface) const;
  bool sameGroup(std::string_view a, std::string_view b) const;

 private:
  std::string id_;
  std::size_t group_count_ = 0;
  std::map<std::string, std::size_t> member_to_group_;
};

// True iff the token matches a valid object label after normalization, or
// shares a dictionary group with one.
bool judge(std::string_view token, const BenchmarkRecord& record,
           const AliasDictionary* dictionary = nullptr);

struct JudgedPrediction {
  RecordKey key;
  std::optional<Prediction> top;  // nullopt: the record got no prediction
  bool correct = false;
};

// Top-1 judgement per record. Records without a matching prediction set (or
// with an empty one) yield an unrankable incorrect entry.
std::vector<JudgedPrediction> judgeTopPredictions(const std::vector<BenchmarkRecord>& records,
                                                  const std::vector<PredictionSet>& predictions,
                                                  const AliasDictionary* dictionary = nullptr);

// Fraction of records with a valid object anywhere in their prediction set.
double hitsAtK(const std::vector<BenchmarkRecord>& records,
               const std::vector<PredictionSet>& predictions,
               const AliasDictionary* dictionary = nullptr);

enum class PrefixRule {
  kLargestPrefix,  // longest ranked prefix whose precision is >= target
  kFirstDip,       // stop before the first prefix whose precision falls below target
};

struct RecallAtPrecision {
  double recall = 0.0;
  std::optional<double> threshold_probability;
  std::size_t prefix_size = 0;
};

inline constexpr double kDefaultPrecisionTarget = 0.90;

// Ranks judged top-1 predictions by probability (ties by record key, never by
// correctness) and cuts at the prefix chosen by `rule`. Recall is over every
// judged record, ranked or not. target_p must lie in (0, 1].
RecallAtPrecision recallAtPrecision(std::span<const JudgedPrediction> judged,
                                    double target_p = kDefaultPrecisionTarget,
                                    PrefixRule rule = PrefixRule::kLargestPrefix);

struct BaselineResult {
  double precision = 0.0;
  double recall = 0.0;

  friend bool operator==(const BaselineResult&, const BaselineResult&) = default;
};

// Object distribution: occurrence counts of valid objects over the records.
BaselineResult majorityBaseline(const std::vector<BenchmarkRecord>& records,
                                const AliasDictionary* dictionary = nullptr);
BaselineResult randomBaseline(const std::vector<BenchmarkRecord>& records, std::uint64_t seed,
                              const AliasDictionary* dictionary = nullptr);
// Closed-form expectation of randomBaseline precision over seeds.
double expectedRandomPrecision(const std::vector<BenchmarkRecord>& records,
                               const AliasDictionary* dictionary = nullptr);

// Base-2 Shannon entropy divided by log2(#nonzero outcomes); 0 for <= 1 outcome.
double normalizedEntropy(std::span<const std::uint64_t> counts);

struct RelationFeatures {
  double entropy_normalized = 0.0;
  std::size_t unique_objects = 0;
  double single_valuedness = 0.0;
  double vocab_coverage = 0.0;
};

RelationFeatures relationFeatures(const std::vector<BenchmarkRecord>& records,
                                  const std::function<bool(std::string_view)>& in_vocab);

// Sample Pearson correlation. Throws KbError(kValidation) on length mismatch,
// fewer than two points, or zero variance ("undefined correlation").
double pearson(std::span<const double> x, std::span<const double> y);

struct ReportInputs {
  std::string relation;
  std::vector<JudgedPrediction> judged;
  RelationFeatures features;
  BaselineResult majority;
  BaselineResult random;
  double target_p = kDefaultPrecisionTarget;
  PrefixRule rule = PrefixRule::kLargestPrefix;
  double hits_at_k = 0.0;
};

RelationReport buildRelationReport(const ReportInputs& inputs);

// JSON with sorted keys, one document per report.
std::string serializeReport(const RelationReport& report);
RelationReport parseReport(std::string_view text);

// Aggregate table: one row per relation plus an average row.
std::string formatReportTable(const std::vector<RelationReport>& reports,
                              const std::map<std::string, std::string>& relation_names);

}  // namespace kbforge::metrics
