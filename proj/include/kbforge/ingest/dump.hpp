#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kbforge/kbcore/types.hpp"

namespace kbforge::ingest {

inline constexpr std::string_view kLabelLanguage = "en";
inline constexpr std::string_view kInstanceOf = "P31";

enum class StatementRank { kNormal, kPreferred, kDeprecated };

struct Statement {
  // Entity id of the main value; nullopt for literals and somevalue/novalue.
  std::optional<std::string> object_id;
  StatementRank rank = StatementRank::kNormal;
};

struct DumpEntity {
  std::string id;
  std::map<std::string, std::string> labels;  // language -> label
  std::map<std::string, std::vector<Statement>> claims;

  std::optional<std::string> label(std::string_view language = kLabelLanguage) const;
  // True when the property has at least one non-deprecated statement.
  bool holds(std::string_view property) const;
  // Non-deprecated entity values of a property, first occurrence order, deduplicated.
  std::vector<std::string> truthyObjects(std::string_view property) const;
};

struct SkipReport {
  std::uint64_t entities_parsed = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t missing_labels = 0;
  std::uint64_t statements_deprecated = 0;
  std::uint64_t statements_nonentity = 0;

  SkipReport& operator+=(const SkipReport& other);
  friend bool operator==(const SkipReport&, const SkipReport&) = default;
};

std::string formatSkipReport(const SkipReport& report);

// Parses one dump line (surrounding whitespace and a trailing comma allowed).
// nullopt for structurally invalid entity documents.
std::optional<DumpEntity> parseEntityLine(std::string_view line);

// True for lines that carry no entity: blank lines and the outer `[` / `]`.
bool isFramingLine(std::string_view line);

// A re-openable dump. gzip and bzip2 input is detected by magic bytes and
// decompressed transparently.
class DumpSource {
 public:
  static DumpSource fromFile(std::string path);
  static DumpSource fromString(std::string contents);

  std::unique_ptr<std::istream> open() const;
  std::string describe() const;

 private:
  std::optional<std::string> path_;
  std::shared_ptr<const std::string> contents_;
};

// Sequential reader: one entity in memory at a time.
class EntityStream {
 public:
  explicit EntityStream(std::istream& in);

  bool next(DumpEntity& entity);
  const SkipReport& report() const { return report_; }

 private:
  std::istream& in_;
  std::string line_;
  SkipReport report_;
};

struct ScanOptions {
  std::size_t workers = 1;
  std::size_t chunk_lines = 512;
};

// One reader thread feeds chunks of lines to `workers` parser threads, each of
// which calls `visit(worker_index, entity)`. Visits on one worker index never
// overlap, so per-worker accumulators need no locking. Entity order across
// workers is unspecified; callers merge commutatively.
SkipReport scanEntities(const DumpSource& source, const ScanOptions& options,
                        const std::function<void(std::size_t, const DumpEntity&)>& visit);

// One Triple per non-deprecated entity-valued statement whose property is in
// `relations`. Deprecated and literal statements are counted in `report`.
std::vector<Triple> extractTriples(const DumpEntity& entity, const std::set<std::string>& relations,
                                   SkipReport* report = nullptr);

}  // namespace kbforge::ingest
