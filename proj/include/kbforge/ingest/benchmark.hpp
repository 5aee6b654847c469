#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kbforge/ingest/dump.hpp"
#include "kbforge/kbcore/types.hpp"

namespace kbforge::ingest {

inline constexpr std::size_t kDefaultMaxPairs = 100000;
inline constexpr std::size_t kDefaultMissingSample = 10000;

struct BuildOptions {
  std::size_t max_pairs = kDefaultMaxPairs;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// Per-relation pair accounting: candidate_pairs = emitted + dropped_unlabeled + sampled_out.
struct RelationBuildStats {
  std::uint64_t candidate_pairs = 0;
  std::uint64_t dropped_unlabeled = 0;
  std::uint64_t sampled_out = 0;
  std::uint64_t emitted = 0;

  friend bool operator==(const RelationBuildStats&, const RelationBuildStats&) = default;
};

struct BenchmarkBuild {
  // Keyed by relation pid; records ordered by subject id.
  std::map<std::string, std::vector<BenchmarkRecord>> records;
  std::map<std::string, RelationBuildStats> relation_stats;
  SkipReport skips;
};

// Groups every truthy object of a (subject, relation) pair into one record and
// keeps the max_pairs pairs with the smallest samplingKey(seed, subject,
// relation). Pairs whose subject or any object lacks an English label are
// dropped. Invalid specs fail before the dump is opened.
BenchmarkBuild buildBenchmark(const DumpSource& source, const std::vector<RelationSpec>& specs,
                              const BuildOptions& options);

struct RelationDatasetStats {
  std::uint64_t unique_subjects = 0;
  std::uint64_t unique_objects = 0;
  std::uint64_t n_triples = 0;
  std::uint64_t n_multi_token_objects = 0;  // counted per triple
  double entropy_normalized = 0.0;
};

struct DatasetStats {
  std::map<std::string, RelationDatasetStats> per_relation;
  RelationDatasetStats total;  // distinct subjects/objects across relations; summed counts
  // Means over relations.
  double avg_unique_subjects = 0.0;
  double avg_unique_objects = 0.0;
  double avg_triples = 0.0;
  double avg_multi_token_objects = 0.0;
  double avg_entropy_normalized = 0.0;
};

using InVocab = std::function<bool(std::string_view label)>;

DatasetStats datasetStats(const std::map<std::string, std::vector<BenchmarkRecord>>& benchmark,
                          const InVocab& in_vocab);
std::string formatDatasetStats(const DatasetStats& stats);

struct SubjectTypeStats {
  std::map<std::string, std::uint64_t> class_counts;
  // Truthy entity-valued statements of the relation.
  std::uint64_t cardinality = 0;
  std::uint64_t subjects = 0;

  // Most frequent class; ties go to the smaller numeric id.
  std::optional<std::string> modalClass() const;
};

// Direct P31 classes of every subject holding a truthy statement for `relation`.
SubjectTypeStats computeSubjectTypeStats(const DumpSource& source, const std::string& relation,
                                         std::size_t workers = 1);

struct MissingFactSample {
  std::vector<EntityRef> subjects;  // ordered by subject id
  std::uint64_t pool_size = 0;      // every eligible subject in the dump
};

// Subjects that are direct instances of `subject_type`, carry an English
// label, and have no non-deprecated statement for `relation`. Keeps the n
// smallest samplingKey(seed, subject, relation).
MissingFactSample sampleMissingFacts(const DumpSource& source, const std::string& relation,
                                     const std::string& subject_type, std::size_t n,
                                     std::uint64_t seed, std::size_t workers = 1);

}  // namespace kbforge::ingest
