#include "kbforge/ingest/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"
#include "kbforge/kbcore/sampling.hpp"
#include "kbforge/metrics/metrics.hpp"

namespace kbforge::ingest {
namespace {

// Bitset over numeric entity ids.
class IdSet {
 public:
  void insert(std::uint64_t n) {
    auto word = n / 64;
    if (word >= bits_.size()) bits_.resize(word + 1, 0);
    bits_[word] |= std::uint64_t{1} << (n % 64);
  }
  bool contains(std::uint64_t n) const {
    auto word = n / 64;
    return word < bits_.size() && (bits_[word] >> (n % 64)) & 1;
  }
  void merge(const IdSet& other) {
    if (other.bits_.size() > bits_.size()) bits_.resize(other.bits_.size(), 0);
    for (std::size_t i = 0; i < other.bits_.size(); ++i) bits_[i] |= other.bits_[i];
  }

 private:
  std::vector<std::uint64_t> bits_;
};

struct PairValue {
  std::string subject_label;
  std::vector<std::string> objects;
};

using PairSelection = BoundedSelection<PairValue>;

struct WorkerPairs {
  std::map<std::string, PairSelection> selections;
  std::map<std::string, RelationBuildStats> stats;
  SkipReport statements;
};

void validateSpecs(const std::vector<RelationSpec>& specs) {
  std::set<std::string> seen;
  for (const auto& spec : specs) {
    auto errors = validateRelationSpec(spec);
    if (!errors.empty()) {
      throw KbError(ErrorKind::kValidation, "unusable relation spec " + spec.pid + ": " + errors.front());
    }
    if (!seen.insert(spec.pid).second) {
      throw KbError(ErrorKind::kValidation, "relation " + spec.pid + " listed twice");
    }
  }
}

bool labelled(const IdSet& ids, const std::string& id) {
  auto n = numericId(id);
  return n && isEntityId(id) && ids.contains(*n);
}

}  // namespace

BenchmarkBuild buildBenchmark(const DumpSource& source, const std::vector<RelationSpec>& specs,
                              const BuildOptions& options) {
  if (options.max_pairs < 1) throw KbError(ErrorKind::kValidation, "max_pairs must be >= 1");
  validateSpecs(specs);
  ScanOptions scan{options.workers == 0 ? 1 : options.workers};
  const std::size_t workers = scan.workers;

  // Pass 1: which entities carry an English label.
  std::vector<IdSet> labelled_parts(workers);
  scanEntities(source, scan, [&](std::size_t w, const DumpEntity& entity) {
    if (!isEntityId(entity.id) || !entity.label()) return;
    labelled_parts[w].insert(*numericId(entity.id));
  });
  IdSet labelled_ids;
  for (const auto& part : labelled_parts) labelled_ids.merge(part);
  labelled_parts.clear();

  // Pass 2: candidate pairs, sampled per worker then merged.
  std::vector<WorkerPairs> parts(workers);
  for (auto& part : parts) {
    for (const auto& spec : specs) {
      part.selections.emplace(spec.pid, PairSelection(options.max_pairs));
      part.stats[spec.pid];
    }
  }
  BenchmarkBuild build;
  build.skips = scanEntities(source, scan, [&](std::size_t w, const DumpEntity& entity) {
    if (!isEntityId(entity.id)) return;
    auto& part = parts[w];
    for (const auto& spec : specs) {
      auto claims = entity.claims.find(spec.pid);
      if (claims == entity.claims.end()) continue;
      for (const auto& s : claims->second) {
        if (s.rank == StatementRank::kDeprecated) {
          ++part.statements.statements_deprecated;
        } else if (!s.object_id) {
          ++part.statements.statements_nonentity;
        }
      }
      auto objects = entity.truthyObjects(spec.pid);
      if (objects.empty()) continue;
      auto& stats = part.stats[spec.pid];
      ++stats.candidate_pairs;
      auto subject_label = entity.label();
      bool complete = subject_label.has_value() &&
                      std::all_of(objects.begin(), objects.end(),
                                  [&](const std::string& id) { return labelled(labelled_ids, id); });
      if (!complete) {
        ++stats.dropped_unlabeled;
        continue;
      }
      part.selections.at(spec.pid).offer(samplingKey(options.seed, entity.id, spec.pid), entity.id,
                                         PairValue{*subject_label, std::move(objects)});
    }
  });

  std::map<std::string, std::vector<PairSelection::Entry>> chosen;
  std::unordered_set<std::string> needed;
  for (const auto& spec : specs) {
    PairSelection merged(options.max_pairs);
    RelationBuildStats stats;
    for (auto& part : parts) {
      merged.merge(std::move(part.selections.at(spec.pid)));
      const auto& s = part.stats.at(spec.pid);
      stats.candidate_pairs += s.candidate_pairs;
      stats.dropped_unlabeled += s.dropped_unlabeled;
    }
    auto entries = std::move(merged).take();
    stats.emitted = entries.size();
    stats.sampled_out = stats.candidate_pairs - stats.dropped_unlabeled - stats.emitted;
    build.relation_stats[spec.pid] = stats;
    for (const auto& e : entries) needed.insert(e.value.objects.begin(), e.value.objects.end());
    chosen[spec.pid] = std::move(entries);
  }
  for (const auto& part : parts) {
    build.skips.statements_deprecated += part.statements.statements_deprecated;
    build.skips.statements_nonentity += part.statements.statements_nonentity;
  }
  parts.clear();

  // Pass 3: labels of the objects that made it into a record.
  std::vector<std::unordered_map<std::string, std::string>> label_parts(workers);
  if (!needed.empty()) {
    scanEntities(source, scan, [&](std::size_t w, const DumpEntity& entity) {
      if (!needed.contains(entity.id)) return;
      if (auto label = entity.label()) label_parts[w].emplace(entity.id, *label);
    });
  }
  std::unordered_map<std::string, std::string> labels;
  for (auto& part : label_parts) labels.merge(part);

  for (auto& [pid, entries] : chosen) {
    std::vector<BenchmarkRecord> records;
    records.reserve(entries.size());
    for (auto& e : entries) {
      BenchmarkRecord record;
      record.subject = EntityRef{e.tiebreak, std::move(e.value.subject_label)};
      record.relation = pid;
      for (const auto& id : e.value.objects) {
        auto it = labels.find(id);
        if (it == labels.end()) {
          throw KbError(ErrorKind::kData, "label for " + id + " vanished between passes over " +
                                              source.describe());
        }
        record.valid_objects.push_back(EntityRef{id, it->second});
      }
      records.push_back(std::move(record));
    }
    std::sort(records.begin(), records.end(), [](const BenchmarkRecord& a, const BenchmarkRecord& b) {
      return idLess(a.subject.id, b.subject.id);
    });
    build.records[pid] = std::move(records);
  }
  return build;
}

// --- dataset statistics --------------------------------------------------------------

DatasetStats datasetStats(const std::map<std::string, std::vector<BenchmarkRecord>>& benchmark,
                          const InVocab& in_vocab) {
  DatasetStats stats;
  std::set<std::string> all_subjects;
  std::set<std::string> all_objects;
  std::unordered_map<std::string, bool> vocab_cache;
  auto single_token = [&](const std::string& label) {
    auto it = vocab_cache.find(label);
    if (it == vocab_cache.end()) it = vocab_cache.emplace(label, in_vocab(label)).first;
    return it->second;
  };
  for (const auto& [pid, records] : benchmark) {
    RelationDatasetStats rs;
    std::set<std::string> subjects;
    std::map<std::string, std::uint64_t> object_counts;
    for (const auto& record : records) {
      subjects.insert(record.subject.id);
      for (const auto& object : record.valid_objects) {
        ++object_counts[object.id];
        ++rs.n_triples;
        if (!object.label || !single_token(*object.label)) ++rs.n_multi_token_objects;
        all_objects.insert(object.id);
      }
    }
    rs.unique_subjects = subjects.size();
    rs.unique_objects = object_counts.size();
    std::vector<std::uint64_t> counts;
    for (const auto& [id, c] : object_counts) counts.push_back(c);
    rs.entropy_normalized = metrics::normalizedEntropy(counts);
    all_subjects.insert(subjects.begin(), subjects.end());
    stats.total.n_triples += rs.n_triples;
    stats.total.n_multi_token_objects += rs.n_multi_token_objects;
    stats.per_relation[pid] = rs;
  }
  stats.total.unique_subjects = all_subjects.size();
  stats.total.unique_objects = all_objects.size();
  if (!stats.per_relation.empty()) {
    double n = static_cast<double>(stats.per_relation.size());
    for (const auto& [pid, rs] : stats.per_relation) {
      stats.avg_unique_subjects += rs.unique_subjects / n;
      stats.avg_unique_objects += rs.unique_objects / n;
      stats.avg_triples += rs.n_triples / n;
      stats.avg_multi_token_objects += rs.n_multi_token_objects / n;
      stats.avg_entropy_normalized += rs.entropy_normalized / n;
    }
  }
  return stats;
}

std::string formatDatasetStats(const DatasetStats& stats) {
  std::ostringstream out;
  char buf[64];
  auto fixed = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  out << "relation\tunique_subjects\tunique_objects\ttriples\tmulti_token_objects\tentropy\n";
  for (const auto& [pid, rs] : stats.per_relation) {
    out << pid << '\t' << rs.unique_subjects << '\t' << rs.unique_objects << '\t' << rs.n_triples << '\t'
        << rs.n_multi_token_objects << '\t' << fixed(rs.entropy_normalized) << '\n';
  }
  out << "total\t" << stats.total.unique_subjects << '\t' << stats.total.unique_objects << '\t'
      << stats.total.n_triples << '\t' << stats.total.n_multi_token_objects << "\t-\n";
  out << "average\t" << fixed(stats.avg_unique_subjects) << '\t' << fixed(stats.avg_unique_objects) << '\t'
      << fixed(stats.avg_triples) << '\t' << fixed(stats.avg_multi_token_objects) << '\t'
      << fixed(stats.avg_entropy_normalized) << '\n';
  return out.str();
}

// --- subject types and missing facts ----------------------------------------------------

std::optional<std::string> SubjectTypeStats::modalClass() const {
  std::optional<std::string> best;
  std::uint64_t best_count = 0;
  for (const auto& [cls, count] : class_counts) {
    if (count > best_count || (count == best_count && best && idLess(cls, *best))) {
      best = cls;
      best_count = count;
    }
  }
  return best;
}

SubjectTypeStats computeSubjectTypeStats(const DumpSource& source, const std::string& relation,
                                         std::size_t workers) {
  if (!isPropertyId(relation)) throw KbError(ErrorKind::kValidation, "not a property id: " + relation);
  ScanOptions scan{workers == 0 ? 1 : workers};
  std::vector<SubjectTypeStats> parts(scan.workers);
  scanEntities(source, scan, [&](std::size_t w, const DumpEntity& entity) {
    if (!isEntityId(entity.id) || !entity.holds(relation)) return;
    auto& part = parts[w];
    ++part.subjects;
    part.cardinality += entity.truthyObjects(relation).size();
    for (const auto& cls : entity.truthyObjects(kInstanceOf)) ++part.class_counts[cls];
  });
  SubjectTypeStats total;
  for (const auto& part : parts) {
    total.subjects += part.subjects;
    total.cardinality += part.cardinality;
    for (const auto& [cls, count] : part.class_counts) total.class_counts[cls] += count;
  }
  return total;
}

MissingFactSample sampleMissingFacts(const DumpSource& source, const std::string& relation,
                                     const std::string& subject_type, std::size_t n,
                                     std::uint64_t seed, std::size_t workers) {
  if (n < 1) throw KbError(ErrorKind::kValidation, "sample size must be >= 1");
  if (!isPropertyId(relation)) throw KbError(ErrorKind::kValidation, "not a property id: " + relation);
  if (!isEntityId(subject_type)) throw KbError(ErrorKind::kValidation, "not an entity id: " + subject_type);
  ScanOptions scan{workers == 0 ? 1 : workers};
  std::vector<BoundedSelection<std::string>> parts(scan.workers, BoundedSelection<std::string>(n));
  scanEntities(source, scan, [&](std::size_t w, const DumpEntity& entity) {
    if (!isEntityId(entity.id) || entity.holds(relation)) return;
    auto label = entity.label();
    if (!label) return;
    auto classes = entity.truthyObjects(kInstanceOf);
    if (std::find(classes.begin(), classes.end(), subject_type) == classes.end()) return;
    parts[w].offer(samplingKey(seed, entity.id, relation), entity.id, std::move(*label));
  });
  BoundedSelection<std::string> merged(n);
  for (auto& part : parts) merged.merge(std::move(part));
  MissingFactSample sample;
  sample.pool_size = merged.offered();
  for (auto& e : std::move(merged).take()) sample.subjects.push_back(EntityRef{e.tiebreak, std::move(e.value)});
  std::sort(sample.subjects.begin(), sample.subjects.end(),
            [](const EntityRef& a, const EntityRef& b) { return idLess(a.id, b.id); });
  return sample;
}

}  // namespace kbforge::ingest
