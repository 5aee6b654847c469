#include <cstdlib>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "kbforge/cli/pipeline.hpp"

namespace kbforge::cli {

int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"kbforge: probe a masked language model for knowledge base completion"};
  app.name("kbforge");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path = "kbforge.conf";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k, max_pairs, workers;
  std::optional<double> precision;
  std::optional<std::string> out_dir;
  std::vector<std::string> sets;
  bool force = false;

  app.add_option("-c,--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "sampling seed");
  app.add_option("--k", k, "predictions requested per query");
  app.add_option("--precision", precision, "target precision for R@P");
  app.add_option("--max-pairs", max_pairs, "per-relation cap on benchmark pairs");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "parser and probe concurrency");
  app.add_option("--set", sets, "extra key=value config assignment")->take_all();
  app.add_flag("--force", force, "accept upstream artifacts produced under another configuration");

  using StageFn = void (*)(const StageContext&);
  const std::pair<const char*, std::pair<const char*, StageFn>> stages[] = {
      {"build-benchmark", {"sample subject-relation pairs from the dump", buildBenchmarkStage}},
      {"stats", {"dataset statistics of the benchmark", statsStage}},
      {"probe", {"query the backend for every benchmark record", probeStage}},
      {"evaluate", {"per-relation R@P reports", evaluateStage}},
      {"calibrate", {"threshold profiles from the reports", calibrateStage}},
      {"gen-candidates", {"high-accuracy missing-fact candidates and review tasks", genCandidatesStage}},
      {"review-serve", {"serve the annotation API", reviewServeStage}},
      {"report", {"completion-potential estimates", reportStage}},
  };
  StageFn chosen = nullptr;
  for (const auto& [name, entry] : stages) {
    auto* sub = app.add_subcommand(name, entry.first);
    auto fn = entry.second;
    sub->callback([&chosen, fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    StageContext ctx;
    ctx.config = loadConfig(config_path);
    for (const auto& assignment : sets) {
      auto eq = assignment.find('=');
      if (eq == std::string::npos) throw KbError(ErrorKind::kValidation, "--set expects key=value");
      setConfigValue(ctx.config, assignment.substr(0, eq), assignment.substr(eq + 1));
    }
    if (const char* env = std::getenv("KBFORGE_BACKEND"); env && *env) ctx.config.backend = env;
    if (seed) ctx.config.seed = *seed;
    if (k) ctx.config.k = *k;
    if (precision) ctx.config.target_precision = *precision;
    if (max_pairs) ctx.config.max_pairs = *max_pairs;
    if (workers) ctx.config.workers = *workers;
    // Flags are relative to the working directory, config values to the file.
    if (out_dir) ctx.config.out = std::filesystem::absolute(*out_dir).string();
    auto errors = validateConfig(ctx.config);
    if (!errors.empty()) {
      for (const auto& e : errors) err << "config error: " << e << "\n";
      return 1;
    }
    ctx.force = force;
    ctx.log = &err;
    chosen(ctx);
    return 0;
  } catch (const KbError& e) {
    err << "error (" << errorKindName(e.kind()) << "): " << e.what() << "\n";
    return exitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace kbforge::cli
