#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kbforge/kbcore/types.hpp"

namespace kbforge {

inline constexpr std::string_view kFormatHeader = "#kbforge-format v1";

// Provenance embedded in every pipeline artifact as a `#meta {...}` line
// directly after the format header.
struct ArtifactMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string producer;  // subcommand that wrote the artifact

  friend bool operator==(const ArtifactMeta&, const ArtifactMeta&) = default;
};

template <typename T>
struct Document {
  std::optional<ArtifactMeta> meta;
  std::vector<T> items;
};

// Line-delimited documents: header, optional meta, one JSON object per line.
// `on_line` receives the 1-based line number and the raw line; parse errors
// surface as KbError(kData) naming the line.
void readLineDocument(std::istream& in, std::optional<ArtifactMeta>& meta,
                      const std::function<void(std::size_t, std::string_view)>& on_line);
void writeHeader(std::ostream& out, const std::optional<ArtifactMeta>& meta);

std::string serializeBenchmark(const std::vector<BenchmarkRecord>& records,
                               const std::optional<ArtifactMeta>& meta = std::nullopt);
void writeBenchmark(std::ostream& out, const std::vector<BenchmarkRecord>& records,
                    const std::optional<ArtifactMeta>& meta = std::nullopt);
// Rejects malformed lines (with line number), invariant violations and
// duplicate (subject, relation) keys.
Document<BenchmarkRecord> parseBenchmark(std::istream& in);
Document<BenchmarkRecord> parseBenchmark(std::string_view text);

void writeRelationSpecs(std::ostream& out, const std::vector<RelationSpec>& specs);
// Parses and validates; every invalid spec is reported with its line.
std::vector<RelationSpec> parseRelationSpecs(std::istream& in);

void writeCandidates(std::ostream& out, const std::vector<ScoredFactCandidate>& candidates,
                     const std::optional<ArtifactMeta>& meta = std::nullopt);
Document<ScoredFactCandidate> parseCandidates(std::istream& in);

void writePredictionSets(std::ostream& out, const std::vector<PredictionSet>& sets,
                         const std::optional<ArtifactMeta>& meta = std::nullopt);
Document<PredictionSet> parsePredictionSets(std::istream& in);

// Fixed-precision decimal rendering used for every probability written to an
// artifact so byte-identity does not depend on float printing heuristics.
std::string formatProbability(double p);

std::string readFile(const std::string& path);
void writeFileAtomic(const std::string& path, std::string_view contents);

}  // namespace kbforge
