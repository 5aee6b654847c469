#include "kbforge/ingest/dump.hpp"

#include <atomic>
#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge::ingest {

using nlohmann::json;

namespace {

enum class Compression { kNone, kGzip, kBzip2 };

Compression sniff(std::istream& in) {
  char magic[3] = {0, 0, 0};
  in.read(magic, 3);
  auto got = in.gcount();
  in.clear();
  in.seekg(0);
  if (got >= 2 && static_cast<unsigned char>(magic[0]) == 0x1f &&
      static_cast<unsigned char>(magic[1]) == 0x8b) {
    return Compression::kGzip;
  }
  if (got == 3 && magic[0] == 'B' && magic[1] == 'Z' && magic[2] == 'h') return Compression::kBzip2;
  return Compression::kNone;
}

struct RawHolder {
  std::unique_ptr<std::istream> raw;
};

// RawHolder is a base listed first so the raw stream outlives the filter chain.
class DecompressingStream : private RawHolder, public boost::iostreams::filtering_istream {
 public:
  DecompressingStream(std::unique_ptr<std::istream> in, Compression kind)
      : RawHolder{std::move(in)} {
    if (kind == Compression::kGzip) push(boost::iostreams::gzip_decompressor());
    if (kind == Compression::kBzip2) push(boost::iostreams::bzip2_decompressor());
    push(*raw);
  }
};

std::unique_ptr<std::istream> wrap(std::unique_ptr<std::istream> in) {
  auto kind = sniff(*in);
  if (kind == Compression::kNone) return in;
  return std::make_unique<DecompressingStream>(std::move(in), kind);
}

std::string_view stripLine(std::string_view line) {
  constexpr std::string_view ws = " \t\r\n";
  auto first = line.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  line = line.substr(first, line.find_last_not_of(ws) - first + 1);
  if (!line.empty() && line.back() == ',') line.remove_suffix(1);
  return line;
}

void countMissingLabel(const DumpEntity& entity, SkipReport& report) {
  if (!entity.label()) ++report.missing_labels;
}

}  // namespace

std::optional<std::string> DumpEntity::label(std::string_view language) const {
  auto it = labels.find(std::string(language));
  if (it == labels.end() || trim(it->second).empty()) return std::nullopt;
  return it->second;
}

bool DumpEntity::holds(std::string_view property) const {
  auto it = claims.find(std::string(property));
  if (it == claims.end()) return false;
  for (const auto& s : it->second) {
    if (s.rank != StatementRank::kDeprecated) return true;
  }
  return false;
}

std::vector<std::string> DumpEntity::truthyObjects(std::string_view property) const {
  std::vector<std::string> out;
  auto it = claims.find(std::string(property));
  if (it == claims.end()) return out;
  for (const auto& s : it->second) {
    if (s.rank == StatementRank::kDeprecated || !s.object_id) continue;
    if (std::find(out.begin(), out.end(), *s.object_id) == out.end()) out.push_back(*s.object_id);
  }
  return out;
}

SkipReport& SkipReport::operator+=(const SkipReport& other) {
  entities_parsed += other.entities_parsed;
  parse_errors += other.parse_errors;
  missing_labels += other.missing_labels;
  statements_deprecated += other.statements_deprecated;
  statements_nonentity += other.statements_nonentity;
  return *this;
}

std::string formatSkipReport(const SkipReport& r) {
  std::ostringstream out;
  out << "entities_parsed\t" << r.entities_parsed << '\n'
      << "parse_errors\t" << r.parse_errors << '\n'
      << "missing_labels\t" << r.missing_labels << '\n'
      << "statements_deprecated\t" << r.statements_deprecated << '\n'
      << "statements_nonentity\t" << r.statements_nonentity << '\n';
  return out.str();
}

bool isFramingLine(std::string_view line) {
  auto s = stripLine(line);
  return s.empty() || s == "[" || s == "]";
}

namespace {

// SAX handler that materializes only the parts of an entity document the
// toolkit reads: id, labels, and the main value + rank of each statement.
// Descriptions, aliases, sitelinks, qualifiers and references are tokenized
// but never allocated.
class EntityHandler : public json::json_sax_t {
 public:
  explicit EntityHandler(DumpEntity& entity) : entity_(entity) {}

  bool ok() const { return ok_ && saw_root_ && !entity_.id.empty(); }

  bool null() override { return true; }
  bool boolean(bool) override { return true; }
  bool number_integer(number_integer_t v) override {
    if (v >= 0) onUnsigned(static_cast<std::uint64_t>(v));
    return true;
  }
  bool number_unsigned(number_unsigned_t v) override {
    onUnsigned(v);
    return true;
  }
  bool number_float(number_float_t, const string_t&) override { return true; }
  bool binary(binary_t&) override { return true; }

  bool string(string_t& value) override {
    const auto n = path_.size();
    if (n == 1 && path_[0] == "id") {
      entity_.id = std::move(value);
    } else if (n == 3 && path_[0] == "labels" && path_[2] == "value") {
      entity_.labels[path_[1]] = std::move(value);
    } else if (inStatement()) {
      if (n == 4 && path_[3] == "rank") {
        statement_.rank = value == "deprecated"  ? StatementRank::kDeprecated
                          : value == "preferred" ? StatementRank::kPreferred
                                                 : StatementRank::kNormal;
      } else if (n == 5 && path_[3] == "mainsnak" && path_[4] == "snaktype") {
        snak_is_value_ = value == "value";
      } else if (n == 6 && path_[3] == "mainsnak" && path_[4] == "datavalue" && path_[5] == "type") {
        entity_valued_ = value == "wikibase-entityid";
      } else if (n == 7 && path_[3] == "mainsnak" && path_[4] == "datavalue" && path_[5] == "value") {
        if (path_[6] == "id") value_id_ = std::move(value);
        if (path_[6] == "entity-type") item_type_ = value == "item";
      }
    }
    return true;
  }

  bool start_object(std::size_t) override {
    if (path_.empty()) {
      if (saw_root_) return fail();
      saw_root_ = true;
    }
    if (statementSlot()) beginStatement();
    path_.emplace_back();
    return true;
  }

  bool end_object() override {
    path_.pop_back();
    if (statementSlot()) endStatement();
    return true;
  }

  bool start_array(std::size_t) override {
    if (path_.empty()) return fail();
    path_.emplace_back("[]");
    return true;
  }

  bool end_array() override {
    path_.pop_back();
    return true;
  }

  bool key(string_t& k) override {
    path_.back() = std::move(k);
    return true;
  }

  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
    return fail();
  }

 private:
  bool fail() {
    ok_ = false;
    return false;
  }

  // Path is [claims, P, []] : the next object is a statement.
  bool statementSlot() const {
    return path_.size() == 3 && path_[0] == "claims" && path_[2] == "[]";
  }
  bool inStatement() const { return in_statement_ && path_.size() >= 4; }

  void beginStatement() {
    in_statement_ = true;
    statement_ = Statement{};
    snak_is_value_ = true;
    entity_valued_ = false;
    item_type_ = false;
    value_id_.reset();
    numeric_id_.reset();
  }

  void endStatement() {
    in_statement_ = false;
    if (snak_is_value_ && entity_valued_) {
      if (value_id_) {
        if (isEntityId(*value_id_)) statement_.object_id = std::move(value_id_);
      } else if (item_type_ && numeric_id_) {
        statement_.object_id = "Q" + std::to_string(*numeric_id_);
      }
    }
    entity_.claims[path_[1]].push_back(std::move(statement_));
  }

  void onUnsigned(std::uint64_t v) {
    if (inStatement() && path_.size() == 7 && path_[3] == "mainsnak" && path_[4] == "datavalue" &&
        path_[5] == "value" && path_[6] == "numeric-id") {
      numeric_id_ = v;
    }
  }

  DumpEntity& entity_;
  std::vector<std::string> path_;
  bool ok_ = true;
  bool saw_root_ = false;

  bool in_statement_ = false;
  Statement statement_;
  bool snak_is_value_ = true;
  bool entity_valued_ = false;
  bool item_type_ = false;
  std::optional<std::string> value_id_;
  std::optional<std::uint64_t> numeric_id_;
};

}  // namespace

std::optional<DumpEntity> parseEntityLine(std::string_view line) {
  auto body = stripLine(line);
  if (body.empty() || body.front() != '{') return std::nullopt;
  DumpEntity entity;
  EntityHandler handler(entity);
  bool parsed = json::sax_parse(body, &handler, json::input_format_t::json, /*strict=*/true);
  if (!parsed || !handler.ok()) return std::nullopt;
  if (!isEntityId(entity.id) && !isPropertyId(entity.id)) return std::nullopt;
  return entity;
}

DumpSource DumpSource::fromFile(std::string path) {
  DumpSource source;
  source.path_ = std::move(path);
  return source;
}

DumpSource DumpSource::fromString(std::string contents) {
  DumpSource source;
  source.contents_ = std::make_shared<const std::string>(std::move(contents));
  return source;
}

std::unique_ptr<std::istream> DumpSource::open() const {
  if (path_) {
    auto in = std::make_unique<std::ifstream>(*path_, std::ios::binary);
    if (!*in) throw KbError(ErrorKind::kData, "cannot open dump " + *path_);
    return wrap(std::move(in));
  }
  return wrap(std::make_unique<std::istringstream>(contents_ ? *contents_ : std::string()));
}

std::string DumpSource::describe() const { return path_ ? *path_ : std::string("<memory>"); }

EntityStream::EntityStream(std::istream& in) : in_(in) {
  if (!in_) throw KbError(ErrorKind::kData, "unreadable dump stream");
}

bool EntityStream::next(DumpEntity& entity) {
  while (std::getline(in_, line_)) {
    if (isFramingLine(line_)) continue;
    auto parsed = parseEntityLine(line_);
    if (!parsed) {
      ++report_.parse_errors;
      continue;
    }
    ++report_.entities_parsed;
    countMissingLabel(*parsed, report_);
    entity = std::move(*parsed);
    return true;
  }
  if (in_.bad()) throw KbError(ErrorKind::kData, "dump read error");
  return false;
}

SkipReport scanEntities(const DumpSource& source, const ScanOptions& options,
                        const std::function<void(std::size_t, const DumpEntity&)>& visit) {
  auto in = source.open();
  if (options.workers <= 1) {
    EntityStream stream(*in);
    DumpEntity entity;
    while (stream.next(entity)) visit(0, entity);
    return stream.report();
  }

  using Chunk = std::vector<std::string>;
  const std::size_t capacity = options.workers * 2;
  std::mutex mu;
  std::condition_variable not_empty;
  std::condition_variable not_full;
  std::deque<Chunk> queue;
  bool done = false;
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::vector<SkipReport> reports(options.workers);

  auto worker = [&](std::size_t index) {
    SkipReport& report = reports[index];
    for (;;) {
      Chunk chunk;
      {
        std::unique_lock lock(mu);
        not_empty.wait(lock, [&] { return !queue.empty() || done; });
        if (queue.empty()) return;
        chunk = std::move(queue.front());
        queue.pop_front();
      }
      not_full.notify_one();
      if (abort) continue;
      try {
        for (const auto& line : chunk) {
          if (isFramingLine(line)) continue;
          auto entity = parseEntityLine(line);
          if (!entity) {
            ++report.parse_errors;
            continue;
          }
          ++report.entities_parsed;
          countMissingLabel(*entity, report);
          visit(index, *entity);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(options.workers);
  for (std::size_t i = 0; i < options.workers; ++i) threads.emplace_back(worker, i);

  std::string line;
  Chunk chunk;
  auto flush = [&] {
    std::unique_lock lock(mu);
    not_full.wait(lock, [&] { return queue.size() < capacity; });
    queue.push_back(std::move(chunk));
    chunk = Chunk();
    lock.unlock();
    not_empty.notify_one();
  };
  bool read_failed = false;
  try {
    while (!abort && std::getline(*in, line)) {
      chunk.push_back(std::move(line));
      if (chunk.size() >= options.chunk_lines) flush();
    }
    read_failed = in->bad();
  } catch (...) {
    std::lock_guard lock(mu);
    if (!failure) failure = std::current_exception();
  }
  if (!chunk.empty()) flush();
  {
    std::lock_guard lock(mu);
    done = true;
  }
  not_empty.notify_all();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  if (read_failed) throw KbError(ErrorKind::kData, "dump read error");

  SkipReport total;
  for (const auto& r : reports) total += r;
  return total;
}

std::vector<Triple> extractTriples(const DumpEntity& entity, const std::set<std::string>& relations,
                                   SkipReport* report) {
  std::vector<Triple> out;
  for (const auto& [property, statements] : entity.claims) {
    if (!relations.contains(property)) continue;
    for (const auto& s : statements) {
      if (s.rank == StatementRank::kDeprecated) {
        if (report) ++report->statements_deprecated;
        continue;
      }
      if (!s.object_id) {
        if (report) ++report->statements_nonentity;
        continue;
      }
      out.push_back(Triple{EntityRef{entity.id, entity.label()}, property,
                           EntityRef{*s.object_id, std::nullopt}});
    }
  }
  return out;
}

}  // namespace kbforge::ingest
