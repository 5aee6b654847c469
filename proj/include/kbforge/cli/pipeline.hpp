#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>

#include "kbforge/cli/config.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/probing/probing.hpp"

namespace kbforge::cli {

// Artifact names inside the output directory.
namespace artifact {
inline constexpr const char* kBenchmark = "benchmark.jsonl";
inline constexpr const char* kBuildReport = "build_report.tsv";
inline constexpr const char* kStats = "stats.tsv";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kReports = "reports.jsonl";
inline constexpr const char* kReportTable = "report_table.tsv";
inline constexpr const char* kProfiles = "profiles.jsonl";
inline constexpr const char* kMissingPredictions = "missing_predictions.jsonl";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kTasks = "tasks.jsonl";
inline constexpr const char* kCompletionInputs = "completion_inputs.jsonl";
inline constexpr const char* kEstimates = "estimates.tsv";
inline constexpr const char* kReviewLog = "review/events.jsonl";
}  // namespace artifact

struct StageContext {
  PipelineConfig config;
  bool force = false;  // accept upstream artifacts from another configuration
  std::ostream* log = nullptr;
  // Replaces backend construction from config.backend (tests).
  std::function<std::unique_ptr<probing::Backend>(const std::string& endpoint)> backend_factory;
};

void buildBenchmarkStage(const StageContext& ctx);
void statsStage(const StageContext& ctx);
void probeStage(const StageContext& ctx);
void evaluateStage(const StageContext& ctx);
void calibrateStage(const StageContext& ctx);
void genCandidatesStage(const StageContext& ctx);
void reviewServeStage(const StageContext& ctx);
void reportStage(const StageContext& ctx);

std::unique_ptr<probing::Backend> makeBackend(const PipelineConfig& config);

// 0 ok, 1 validation, 2 transport, 3 data.
int exitCodeFor(ErrorKind kind);

// Full command line entry point; `argv[0]` is the program name.
int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kbforge::cli
