#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kbforge::cli {

// Per-relation values that replace measured inputs of the completion report.
struct RelationOverrides {
  std::optional<double> accuracy;
  std::optional<std::uint64_t> cardinality;
  std::optional<std::uint64_t> missing;
  std::optional<double> high_acc;
};

struct PipelineConfig {
  std::string dump;
  std::string relations;
  std::string prompts;       // optional: pid<TAB>template lines replacing spec templates
  std::string dictionaries;  // optional: directory of <dictionary_id>.dict files
  std::string backend;       // http://host:port or mock:<table file>
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t k = 10;
  double target_precision = 0.90;
  std::size_t max_pairs = 100000;
  std::size_t missing_sample_n = 10000;
  std::size_t review_sample_n = 50;
  int votes_per_task = 2;
  std::string review_address = "127.0.0.1:8765";
  std::size_t workers = 1;
  std::map<std::string, RelationOverrides> overrides;  // by relation id

  // Relative paths resolve against this directory.
  std::string base_dir;

  std::string resolve(const std::string& path) const;
};

// `key = value` lines; `#` comments. Unknown keys and unparsable values are
// collected, one message per field, into a KbError(kValidation).
PipelineConfig parseConfig(const std::string& text, const std::string& base_dir = "");
PipelineConfig loadConfig(const std::string& path);

// Applies one `key=value` assignment (same keys as the file).
void setConfigValue(PipelineConfig& config, const std::string& key, const std::string& value);

// Field-level problems; empty when the config is usable.
std::vector<std::string> validateConfig(const PipelineConfig& config);

// Hash over every setting that influences artifact contents: small input
// files by content, the dump by file name and size. Output
// directory, backend address, review address, worker count and the report
// overrides are excluded.
std::string configHash(const PipelineConfig& config);

}  // namespace kbforge::cli
