#include "kbforge/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <sstream>

#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"
#include "kbforge/kbcore/io.hpp"

namespace kbforge::cli {
namespace {

template <typename T>
T parseInteger(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw KbError(ErrorKind::kValidation, key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parseReal(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double d = std::stod(value, &used);
    if (used == value.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw KbError(ErrorKind::kValidation, key + ": expected a number, got '" + value + "'");
}

std::string joined(const std::vector<std::string>& messages) {
  std::string out;
  for (const auto& m : messages) out += (out.empty() ? "" : "\n") + m;
  return out;
}

}  // namespace

std::string PipelineConfig::resolve(const std::string& path) const {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

void setConfigValue(PipelineConfig& c, const std::string& key, const std::string& value) {
  auto dot = key.find('.');
  if (dot != std::string::npos) {
    auto field = key.substr(0, dot), pid = key.substr(dot + 1);
    if (!isPropertyId(pid)) throw KbError(ErrorKind::kValidation, key + ": '" + pid + "' is not a property id");
    auto& o = c.overrides[pid];
    if (field == "accuracy") {
      o.accuracy = parseReal(key, value);
    } else if (field == "cardinality") {
      o.cardinality = parseInteger<std::uint64_t>(key, value);
    } else if (field == "missing") {
      o.missing = parseInteger<std::uint64_t>(key, value);
    } else if (field == "high_acc") {
      o.high_acc = parseReal(key, value);
    } else {
      throw KbError(ErrorKind::kValidation, key + ": unknown setting");
    }
    return;
  }
  if (key == "dump") c.dump = value;
  else if (key == "relations") c.relations = value;
  else if (key == "prompts") c.prompts = value;
  else if (key == "dictionaries") c.dictionaries = value;
  else if (key == "backend") c.backend = value;
  else if (key == "out") c.out = value;
  else if (key == "seed") c.seed = parseInteger<std::uint64_t>(key, value);
  else if (key == "k") c.k = parseInteger<std::size_t>(key, value);
  else if (key == "target_precision") c.target_precision = parseReal(key, value);
  else if (key == "max_pairs") c.max_pairs = parseInteger<std::size_t>(key, value);
  else if (key == "missing_sample_n") c.missing_sample_n = parseInteger<std::size_t>(key, value);
  else if (key == "review_sample_n") c.review_sample_n = parseInteger<std::size_t>(key, value);
  else if (key == "votes_per_task") c.votes_per_task = parseInteger<int>(key, value);
  else if (key == "review_address") c.review_address = value;
  else if (key == "workers") c.workers = parseInteger<std::size_t>(key, value);
  else throw KbError(ErrorKind::kValidation, key + ": unknown setting");
}

PipelineConfig parseConfig(const std::string& text, const std::string& base_dir) {
  PipelineConfig config;
  config.base_dir = base_dir;
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    auto eq = content.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    try {
      setConfigValue(config, trim(content.substr(0, eq)), trim(content.substr(eq + 1)));
    } catch (const KbError& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!errors.empty()) throw KbError(ErrorKind::kValidation, joined(errors));
  return config;
}

PipelineConfig loadConfig(const std::string& path) {
  std::string text;
  try {
    text = readFile(path);
  } catch (const KbError&) {
    throw KbError(ErrorKind::kValidation, "cannot read config file " + path);
  }
  auto dir = std::filesystem::path(path).parent_path().string();
  return parseConfig(text, dir);
}

std::vector<std::string> validateConfig(const PipelineConfig& c) {
  std::vector<std::string> errors;
  if (c.k < 1) errors.push_back("k: must be >= 1");
  if (!(c.target_precision > 0.0 && c.target_precision <= 1.0)) errors.push_back("target_precision: must be in (0, 1]");
  if (c.max_pairs < 1) errors.push_back("max_pairs: must be >= 1");
  if (c.missing_sample_n < 1) errors.push_back("missing_sample_n: must be >= 1");
  if (c.review_sample_n < 1) errors.push_back("review_sample_n: must be >= 1");
  if (c.votes_per_task < 1) errors.push_back("votes_per_task: must be >= 1");
  if (c.workers < 1) errors.push_back("workers: must be >= 1");
  if (c.out.empty()) errors.push_back("out: must not be empty");
  for (const auto& [pid, o] : c.overrides) {
    auto fraction = [&](const std::optional<double>& v, const char* name) {
      if (v && !(*v >= 0.0 && *v <= 1.0)) errors.push_back(std::string(name) + "." + pid + ": must be in [0, 1]");
    };
    fraction(o.accuracy, "accuracy");
    fraction(o.high_acc, "high_acc");
    if (o.cardinality && *o.cardinality == 0) errors.push_back("cardinality." + pid + ": must be > 0");
  }
  return errors;
}

namespace {

// Inputs are identified by content where that is cheap and by name and size
// for the dump, so the hash survives moving the files.
std::string fileIdentity(const PipelineConfig& c, const std::string& value) {
  if (value.empty()) return "";
  auto path = c.resolve(value);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return "path:" + value;
  return "content:" + toHex(stableHash(readFile(path)));
}

std::string dumpIdentity(const PipelineConfig& c) {
  if (c.dump.empty()) return "";
  auto path = std::filesystem::path(c.resolve(c.dump));
  std::error_code ec;
  auto size = std::filesystem::file_size(path, ec);
  if (ec) return "path:" + c.dump;
  return path.filename().string() + ":" + std::to_string(size);
}

std::string dictionaryIdentity(const PipelineConfig& c) {
  if (c.dictionaries.empty()) return "";
  auto dir = std::filesystem::path(c.resolve(c.dictionaries));
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return "path:" + c.dictionaries;
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".dict") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::string out;
  for (const auto& n : names) out += n + "=" + toHex(stableHash(readFile((dir / n).string()))) + ";";
  return out;
}

}  // namespace

std::string configHash(const PipelineConfig& c) {
  std::ostringstream canonical;
  canonical << "dump=" << dumpIdentity(c) << "\nrelations=" << fileIdentity(c, c.relations)
            << "\nprompts=" << fileIdentity(c, c.prompts) << "\ndictionaries=" << dictionaryIdentity(c)
            << "\nseed=" << c.seed << "\nk=" << c.k
            << "\ntarget_precision=" << formatProbability(c.target_precision) << "\nmax_pairs=" << c.max_pairs
            << "\nmissing_sample_n=" << c.missing_sample_n << "\nreview_sample_n=" << c.review_sample_n
            << "\nvotes_per_task=" << c.votes_per_task;
  return toHex(stableHash(canonical.str()));
}

}  // namespace kbforge::cli
