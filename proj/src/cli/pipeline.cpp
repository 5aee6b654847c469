#include "kbforge/cli/pipeline.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "kbforge/completion/completion.hpp"
#include "kbforge/ingest/benchmark.hpp"
#include "kbforge/ingest/dump.hpp"
#include "kbforge/kbcore/ids.hpp"
#include "kbforge/kbcore/io.hpp"
#include "kbforge/metrics/metrics.hpp"
#include "kbforge/review/review.hpp"
#include "kbforge/review/server.hpp"

namespace kbforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream& logOf(const StageContext& ctx) { return ctx.log ? *ctx.log : std::cerr; }

std::string outPath(const StageContext& ctx, const char* name) {
  return (fs::path(ctx.config.resolve(ctx.config.out)) / name).string();
}

ArtifactMeta metaFor(const StageContext& ctx, const char* producer) {
  return {configHash(ctx.config), ctx.config.seed, producer};
}

void writeArtifact(const std::string& path, const std::string& contents) {
  fs::create_directories(fs::path(path).parent_path());
  writeFileAtomic(path, contents);
}

std::string headerText(const ArtifactMeta& meta) {
  std::ostringstream out;
  writeHeader(out, meta);
  return out.str();
}

// Reads an upstream artifact; missing files name the producing subcommand.
std::string readUpstream(const std::string& path, const char* producer) {
  if (!fs::exists(path)) {
    throw KbError(ErrorKind::kData, "missing " + path + "; run `kbforge " + producer + "` first");
  }
  return readFile(path);
}

void checkMeta(const StageContext& ctx, const std::optional<ArtifactMeta>& meta, const std::string& path,
               const char* producer) {
  auto expected = configHash(ctx.config);
  std::string found = meta ? meta->config_hash : "none";
  if (found == expected) return;
  if (ctx.force) {
    logOf(ctx) << "warning: " << path << " has config hash " << found << " (current " << expected
               << "); used because of --force\n";
    return;
  }
  throw KbError(ErrorKind::kValidation, path + " was produced under config hash " + found + " but the current config is " +
                                            expected + "; rerun `kbforge " + producer + "` or pass --force");
}

template <typename Parse>
auto loadUpstream(const StageContext& ctx, const char* name, const char* producer, Parse parse) {
  auto path = outPath(ctx, name);
  std::istringstream in(readUpstream(path, producer));
  auto doc = parse(in);
  checkMeta(ctx, doc.meta, path, producer);
  return doc;
}

std::vector<RelationSpec> loadSpecs(const PipelineConfig& config) {
  if (config.relations.empty()) throw KbError(ErrorKind::kValidation, "relations: not configured");
  auto path = config.resolve(config.relations);
  std::ifstream in(path);
  if (!in) throw KbError(ErrorKind::kValidation, "relations: cannot read " + path);
  auto specs = parseRelationSpecs(in);
  if (!config.prompts.empty()) {
    auto prompts_path = config.resolve(config.prompts);
    std::istringstream lines(readFile(prompts_path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (trim(line).empty() || line.front() == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw KbError(ErrorKind::kValidation, prompts_path + " line " + std::to_string(line_no) + ": expected pid<TAB>template");
      }
      auto pid = line.substr(0, tab);
      auto it = std::find_if(specs.begin(), specs.end(), [&](const RelationSpec& s) { return s.pid == pid; });
      if (it == specs.end()) continue;
      it->template_text = trim(line.substr(tab + 1));
      auto errors = validateRelationSpec(*it);
      if (!errors.empty()) {
        throw KbError(ErrorKind::kValidation, prompts_path + " line " + std::to_string(line_no) + ": " + errors.front());
      }
    }
  }
  return specs;
}

std::map<std::string, RelationSpec> specMap(const std::vector<RelationSpec>& specs) {
  std::map<std::string, RelationSpec> out;
  for (const auto& s : specs) out.emplace(s.pid, s);
  return out;
}

std::map<std::string, metrics::AliasDictionary> loadDictionaries(const PipelineConfig& config,
                                                                 const std::vector<RelationSpec>& specs) {
  std::map<std::string, metrics::AliasDictionary> out;
  for (const auto& s : specs) {
    if (!s.dictionary_id || out.contains(*s.dictionary_id)) continue;
    if (config.dictionaries.empty()) {
      throw KbError(ErrorKind::kValidation, "dictionaries: relation " + s.pid + " needs dictionary '" +
                                                *s.dictionary_id + "' but no directory is configured");
    }
    auto path = (fs::path(config.resolve(config.dictionaries)) / (*s.dictionary_id + ".dict")).string();
    out.emplace(*s.dictionary_id, metrics::AliasDictionary::loadFile(*s.dictionary_id, path));
  }
  return out;
}

ingest::DumpSource dumpSource(const PipelineConfig& config) {
  if (config.dump.empty()) throw KbError(ErrorKind::kValidation, "dump: not configured");
  auto path = config.resolve(config.dump);
  if (!fs::exists(path)) throw KbError(ErrorKind::kValidation, "dump: no such file " + path);
  return ingest::DumpSource::fromFile(path);
}

std::unique_ptr<probing::Backend> backendFor(const StageContext& ctx) {
  if (ctx.backend_factory) return ctx.backend_factory(ctx.config.backend);
  return makeBackend(ctx.config);
}

void requireHealthy(probing::Backend& backend, const std::string& endpoint) {
  if (!backend.health()) throw KbError(ErrorKind::kTransport, "backend " + endpoint + " is unreachable or unhealthy");
}

std::map<std::string, std::vector<BenchmarkRecord>> byRelation(std::vector<BenchmarkRecord> records) {
  std::map<std::string, std::vector<BenchmarkRecord>> out;
  for (auto& r : records) out[r.relation].push_back(std::move(r));
  return out;
}

probing::ProbeResult probeOrFail(const std::vector<probing::ProbeInput>& inputs,
                                 const std::map<std::string, RelationSpec>& specs, probing::Backend& backend,
                                 const StageContext& ctx, const char* what) {
  probing::ProbeOptions options;
  options.k = ctx.config.k;
  options.window = ctx.config.workers;
  auto result = probing::probeBatch(inputs, specs, backend, options);
  if (!inputs.empty() && result.transport_failures == inputs.size()) {
    throw KbError(ErrorKind::kTransport, std::string(what) + ": every query failed; first error: " +
                                             result.sets.front().error.value_or("?"));
  }
  if (result.failures > 0) {
    logOf(ctx) << "warning: " << what << ": " << result.failures << " of " << inputs.size()
               << " queries failed and were recorded with their error\n";
  }
  return result;
}

std::string reportLine(const RelationReport& report) {
  return json::parse(metrics::serializeReport(report)).dump(-1, ' ', false);
}

struct CompletionInput {
  std::string relation;
  std::string subject_type;
  std::uint64_t cardinality = 0;
  std::uint64_t pool_size = 0;
  std::uint64_t sampled = 0;
  std::uint64_t candidates = 0;
  std::uint64_t retained = 0;
  double high_acc_fraction = 0.0;
};

}  // namespace

int exitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kConflict:
      return 1;
    case ErrorKind::kTransport:
    case ErrorKind::kProtocol:
      return 2;
    case ErrorKind::kData:
    case ErrorKind::kNotFound:
      return 3;
  }
  return 3;
}

std::unique_ptr<probing::Backend> makeBackend(const PipelineConfig& config) {
  const auto& endpoint = config.backend;
  if (endpoint.empty()) throw KbError(ErrorKind::kValidation, "backend: not configured (set backend or KBFORGE_BACKEND)");
  if (endpoint.starts_with("mock:")) {
    return std::make_unique<probing::MockBackend>(probing::MockBackend::loadFile(config.resolve(endpoint.substr(5))));
  }
  return std::make_unique<probing::HttpBackend>(endpoint);
}

// --- stages --------------------------------------------------------------------------

void buildBenchmarkStage(const StageContext& ctx) {
  const auto& c = ctx.config;
  auto specs = loadSpecs(c);
  auto source = dumpSource(c);
  auto build = ingest::buildBenchmark(source, specs, {c.max_pairs, c.seed, c.workers});

  std::vector<BenchmarkRecord> all;
  std::ostringstream table;
  table << headerText(metaFor(ctx, "build-benchmark"));
  table << "relation\tcandidate_pairs\tdropped_unlabeled\tsampled_out\temitted\n";
  for (const auto& spec : specs) {
    auto& records = build.records[spec.pid];
    all.insert(all.end(), records.begin(), records.end());
    const auto& s = build.relation_stats[spec.pid];
    table << spec.pid << '\t' << s.candidate_pairs << '\t' << s.dropped_unlabeled << '\t' << s.sampled_out << '\t'
          << s.emitted << '\n';
    logOf(ctx) << "build-benchmark: " << spec.pid << " " << s.emitted << " records from " << s.candidate_pairs
               << " pairs\n";
  }
  std::istringstream skips(ingest::formatSkipReport(build.skips));
  for (std::string line; std::getline(skips, line);) {
    if (!line.empty()) table << "# " << line << '\n';
  }
  writeArtifact(outPath(ctx, artifact::kBenchmark), serializeBenchmark(all, metaFor(ctx, "build-benchmark")));
  writeArtifact(outPath(ctx, artifact::kBuildReport), table.str());
}

void statsStage(const StageContext& ctx) {
  auto bench = loadUpstream(ctx, artifact::kBenchmark, "build-benchmark",
                            [](std::istream& in) { return parseBenchmark(in); });
  auto backend = backendFor(ctx);
  requireHealthy(*backend, ctx.config.backend);
  probing::VocabOracle oracle(*backend);
  auto stats = ingest::datasetStats(byRelation(std::move(bench.items)),
                                    [&](std::string_view label) { return oracle(label); });
  writeArtifact(outPath(ctx, artifact::kStats), headerText(metaFor(ctx, "stats")) + ingest::formatDatasetStats(stats));
}

void probeStage(const StageContext& ctx) {
  auto specs = specMap(loadSpecs(ctx.config));
  auto bench = loadUpstream(ctx, artifact::kBenchmark, "build-benchmark",
                            [](std::istream& in) { return parseBenchmark(in); });
  auto backend = backendFor(ctx);
  requireHealthy(*backend, ctx.config.backend);
  auto result = probeOrFail(probing::probeInputs(bench.items), specs, *backend, ctx, "probe");
  std::ostringstream out;
  writePredictionSets(out, result.sets, metaFor(ctx, "probe"));
  writeArtifact(outPath(ctx, artifact::kPredictions), out.str());
  logOf(ctx) << "probe: " << result.sets.size() << " prediction sets\n";
}

void evaluateStage(const StageContext& ctx) {
  const auto& c = ctx.config;
  auto specs = loadSpecs(c);
  auto dictionaries = loadDictionaries(c, specs);
  auto bench = loadUpstream(ctx, artifact::kBenchmark, "build-benchmark",
                            [](std::istream& in) { return parseBenchmark(in); });
  auto predictions = loadUpstream(ctx, artifact::kPredictions, "probe",
                                  [](std::istream& in) { return parsePredictionSets(in); });
  auto backend = backendFor(ctx);
  requireHealthy(*backend, c.backend);
  probing::VocabOracle oracle(*backend);
  auto in_vocab = [&](std::string_view label) { return oracle(label); };

  auto records = byRelation(std::move(bench.items));
  std::map<std::string, std::vector<PredictionSet>> sets;
  for (auto& s : predictions.items) sets[s.key.relation_id].push_back(std::move(s));

  std::vector<RelationReport> reports;
  std::map<std::string, std::string> names;
  std::string lines = headerText(metaFor(ctx, "evaluate"));
  for (const auto& spec : specs) {
    auto it = records.find(spec.pid);
    if (it == records.end() || it->second.empty()) {
      logOf(ctx) << "evaluate: " << spec.pid << " has no benchmark records; skipped\n";
      continue;
    }
    const auto& rel_records = it->second;
    const metrics::AliasDictionary* dict = spec.dictionary_id ? &dictionaries.at(*spec.dictionary_id) : nullptr;
    metrics::ReportInputs inputs;
    inputs.relation = spec.pid;
    inputs.judged = metrics::judgeTopPredictions(rel_records, sets[spec.pid], dict);
    inputs.features = metrics::relationFeatures(rel_records, in_vocab);
    inputs.majority = metrics::majorityBaseline(rel_records, dict);
    inputs.random = metrics::randomBaseline(rel_records, c.seed, dict);
    inputs.target_p = c.target_precision;
    inputs.hits_at_k = metrics::hitsAtK(rel_records, sets[spec.pid], dict);
    auto report = metrics::buildRelationReport(inputs);
    lines += reportLine(report) + "\n";
    reports.push_back(report);
    names[spec.pid] = spec.name;
    logOf(ctx) << "evaluate: " << spec.pid << " R@P=" << formatProbability(report.r_at_p) << "\n";
  }
  writeArtifact(outPath(ctx, artifact::kReports), lines);
  writeArtifact(outPath(ctx, artifact::kReportTable),
                headerText(metaFor(ctx, "evaluate")) + metrics::formatReportTable(reports, names));
}

namespace {

Document<RelationReport> parseReports(std::istream& in) {
  Document<RelationReport> doc;
  readLineDocument(in, doc.meta, [&](std::size_t line_no, std::string_view line) {
    try {
      doc.items.push_back(metrics::parseReport(line));
    } catch (const KbError& e) {
      throw KbError(ErrorKind::kData, "line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return doc;
}

}  // namespace

void calibrateStage(const StageContext& ctx) {
  auto reports_path = outPath(ctx, artifact::kReports);
  auto reports = loadUpstream(ctx, artifact::kReports, "evaluate", parseReports);
  auto eval_id = "reports:" + configHash(ctx.config);
  std::vector<completion::ThresholdProfile> profiles;
  for (const auto& r : reports.items) {
    try {
      profiles.push_back(completion::calibrate(r, eval_id));
      logOf(ctx) << "calibrate: " << r.relation << " threshold " << formatProbability(profiles.back().threshold_probability)
                 << "\n";
    } catch (const KbError& e) {
      logOf(ctx) << "calibrate: " << e.what() << "\n";
    }
  }
  std::ostringstream out;
  completion::writeProfiles(out, profiles, metaFor(ctx, "calibrate"));
  writeArtifact(outPath(ctx, artifact::kProfiles), out.str());
}

void genCandidatesStage(const StageContext& ctx) {
  const auto& c = ctx.config;
  auto specs = loadSpecs(c);
  auto spec_map = specMap(specs);
  auto profiles = loadUpstream(ctx, artifact::kProfiles, "calibrate",
                               [](std::istream& in) { return completion::parseProfiles(in); });
  auto source = dumpSource(c);
  auto backend = backendFor(ctx);
  requireHealthy(*backend, c.backend);

  std::vector<PredictionSet> all_sets;
  std::vector<ScoredFactCandidate> all_retained;
  std::vector<AnnotationTask> all_tasks;
  std::string inputs_text = headerText(metaFor(ctx, "gen-candidates"));

  for (const auto& profile : profiles.items) {
    auto spec = spec_map.find(profile.relation);
    if (spec == spec_map.end()) {
      throw KbError(ErrorKind::kData, "profile for " + profile.relation + " has no relation spec");
    }
    auto type_stats = ingest::computeSubjectTypeStats(source, profile.relation, c.workers);
    std::optional<std::string> subject_type;
    if (spec->second.subject_type) {
      subject_type = spec->second.subject_type->id;
    } else {
      subject_type = type_stats.modalClass();
    }
    if (!subject_type) {
      logOf(ctx) << "gen-candidates: " << profile.relation << " has no typed subjects; skipped\n";
      continue;
    }
    auto sample = ingest::sampleMissingFacts(source, profile.relation, *subject_type, c.missing_sample_n, c.seed,
                                             c.workers);
    auto result = probeOrFail(probing::probeInputs(sample.subjects, profile.relation), spec_map, *backend, ctx,
                              "gen-candidates");
    std::map<std::string, std::string> labels;
    for (const auto& s : sample.subjects) labels[s.id] = s.label.value_or("");
    auto candidates = completion::topCandidates(result.sets, labels);
    auto filtered = completion::filterHighAccuracy(candidates, profile);
    auto tasks = completion::sampleForReview(filtered.retained, spec_map, c.review_sample_n, c.seed);

    CompletionInput input{profile.relation,
                          *subject_type,
                          type_stats.cardinality,
                          sample.pool_size,
                          sample.subjects.size(),
                          candidates.size(),
                          filtered.retained.size(),
                          filtered.high_acc_fraction};
    inputs_text += json{{"relation", input.relation},
                        {"subject_type", input.subject_type},
                        {"cardinality", input.cardinality},
                        {"pool_size", input.pool_size},
                        {"sampled", input.sampled},
                        {"candidates", input.candidates},
                        {"retained", input.retained},
                        {"high_acc_fraction", input.high_acc_fraction}}
                       .dump() +
                   "\n";
    logOf(ctx) << "gen-candidates: " << profile.relation << " " << filtered.retained.size() << " of "
               << candidates.size() << " candidates above threshold, " << tasks.size() << " review tasks\n";
    all_sets.insert(all_sets.end(), result.sets.begin(), result.sets.end());
    all_retained.insert(all_retained.end(), filtered.retained.begin(), filtered.retained.end());
    all_tasks.insert(all_tasks.end(), tasks.begin(), tasks.end());
  }

  std::ostringstream sets_out, cand_out, task_out;
  writePredictionSets(sets_out, all_sets, metaFor(ctx, "gen-candidates"));
  writeCandidates(cand_out, all_retained, metaFor(ctx, "gen-candidates"));
  completion::writeTasks(task_out, all_tasks, metaFor(ctx, "gen-candidates"));
  writeArtifact(outPath(ctx, artifact::kMissingPredictions), sets_out.str());
  writeArtifact(outPath(ctx, artifact::kCandidates), cand_out.str());
  writeArtifact(outPath(ctx, artifact::kTasks), task_out.str());
  writeArtifact(outPath(ctx, artifact::kCompletionInputs), inputs_text);
}

namespace {

std::pair<std::string, int> splitAddress(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw KbError(ErrorKind::kValidation, "review_address: expected host:port");
  try {
    return {address.substr(0, colon), std::stoi(address.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw KbError(ErrorKind::kValidation, "review_address: bad port in '" + address + "'");
  }
}

}  // namespace

void reviewServeStage(const StageContext& ctx) {
  auto [host, port] = splitAddress(ctx.config.review_address);
  review::ReviewService service(outPath(ctx, artifact::kReviewLog));
  auto tasks_path = outPath(ctx, artifact::kTasks);
  if (fs::exists(tasks_path)) {
    auto tasks = loadUpstream(ctx, artifact::kTasks, "gen-candidates",
                              [](std::istream& in) { return completion::parseTasks(in); });
    if (!tasks.items.empty()) {
      auto id = service.createCampaign(tasks.items, ctx.config.votes_per_task);
      logOf(ctx) << "review-serve: campaign " << id << " with " << tasks.items.size() << " tasks\n";
    }
  }
  review::ReviewServer server(service);
  int bound = server.bind(host, port);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  logOf(ctx) << "review-serve: listening on " << host << ":" << bound << "\n";
  server.serve();
  // Wake the waiter if the server stopped on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

void reportStage(const StageContext& ctx) {
  const auto& c = ctx.config;
  auto specs = loadSpecs(c);

  std::map<std::string, CompletionInput> measured;
  auto inputs_path = outPath(ctx, artifact::kCompletionInputs);
  if (fs::exists(inputs_path)) {
    auto doc = loadUpstream(ctx, artifact::kCompletionInputs, "gen-candidates", [](std::istream& in) {
      Document<CompletionInput> d;
      readLineDocument(in, d.meta, [&](std::size_t line_no, std::string_view line) {
        try {
          auto j = json::parse(line);
          d.items.push_back({j.at("relation"), j.at("subject_type"), j.at("cardinality"), j.at("pool_size"),
                             j.at("sampled"), j.at("candidates"), j.at("retained"), j.at("high_acc_fraction")});
        } catch (const json::exception& e) {
          throw KbError(ErrorKind::kData, "line " + std::to_string(line_no) + ": " + e.what());
        }
      });
      return d;
    });
    for (auto& i : doc.items) measured.emplace(i.relation, i);
  }

  // Accuracy observed in review: share of voted tasks whose consensus is
  // positive.
  std::map<std::string, std::pair<std::size_t, std::size_t>> reviewed;  // relation -> (positive, voted)
  auto log_path = outPath(ctx, artifact::kReviewLog);
  if (fs::exists(log_path)) {
    auto state = review::replay(review::readEventLog(log_path));
    for (const auto& [id, campaign] : state.campaigns) {
      auto summary = review::summarize(*campaign);
      for (const auto& [relation, r] : summary.per_relation) {
        auto& acc = reviewed[relation];
        acc.first += r.consensus_counts[0] + r.consensus_counts[1];
        acc.second += r.voted_tasks;
      }
    }
  }

  std::vector<CompletionEstimate> estimates;
  std::vector<std::string> missing;
  for (const auto& spec : specs) {
    auto o = c.overrides.contains(spec.pid) ? c.overrides.at(spec.pid) : RelationOverrides{};
    auto m = measured.find(spec.pid);
    bool have_measure = m != measured.end();
    if (!have_measure && !(o.cardinality && o.missing && o.high_acc)) continue;
    std::optional<double> accuracy = o.accuracy;
    if (!accuracy) {
      if (auto r = reviewed.find(spec.pid); r != reviewed.end() && r->second.second > 0) {
        accuracy = static_cast<double>(r->second.first) / static_cast<double>(r->second.second);
      }
    }
    if (!accuracy) {
      missing.push_back(spec.pid);
      continue;
    }
    auto cardinality = o.cardinality ? *o.cardinality : m->second.cardinality;
    auto n_missing = o.missing ? *o.missing : m->second.pool_size;
    auto high_acc = o.high_acc ? *o.high_acc : m->second.high_acc_fraction;
    if (cardinality == 0) {
      logOf(ctx) << "report: " << spec.pid << " has no statements in the dump; skipped\n";
      continue;
    }
    estimates.push_back(completion::estimateCompletion(spec.name, cardinality, n_missing, high_acc, *accuracy));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& pid : missing) list += (list.empty() ? "" : ", ") + pid;
    throw KbError(ErrorKind::kValidation, "no accuracy for " + list +
                                              ": set accuracy.<pid> in the config or collect votes with `kbforge review-serve`");
  }
  if (estimates.empty()) {
    throw KbError(ErrorKind::kData, "nothing to report; run `kbforge gen-candidates` first or supply overrides");
  }
  writeArtifact(outPath(ctx, artifact::kEstimates),
                headerText(metaFor(ctx, "report")) + completion::formatEstimateTable(estimates));
  logOf(ctx) << completion::formatEstimateTable(estimates);
}

}  // namespace kbforge::cli
