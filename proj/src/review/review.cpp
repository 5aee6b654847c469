#include "kbforge/review/review.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/kbcore/hash.hpp"
#include "kbforge/kbcore/ids.hpp"

namespace kbforge::review {

using nlohmann::json;

ExportPolicy parseExportPolicy(std::string_view name) {
  if (name == "strict") return ExportPolicy::kStrict;
  if (name == "plausible") return ExportPolicy::kPlausible;
  throw KbError(ErrorKind::kValidation, "unknown export policy '" + std::string(name) + "'");
}

const AnnotationTask* Campaign::task(const std::string& task_id) const {
  auto it = task_index.find(task_id);
  return it == task_index.end() ? nullptr : &tasks[it->second];
}

std::vector<const Vote*> Campaign::votesFor(const std::string& task_id) const {
  std::vector<const Vote*> out;
  if (auto it = votes_by_task.find(task_id); it != votes_by_task.end()) {
    for (auto i : it->second) out.push_back(&votes[i]);
  }
  return out;
}

bool Campaign::hasVoted(const std::string& task_id, const std::string& annotator_id) const {
  for (const auto* v : votesFor(task_id)) {
    if (v->annotator_id == annotator_id) return true;
  }
  return false;
}

// --- event encoding ----------------------------------------------------------------

namespace {

json optionalJson(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> optionalField(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

json candidateJson(const ScoredFactCandidate& c) {
  return {{"subject_id", c.subject.id},
          {"subject_label", optionalJson(c.subject.label)},
          {"relation_id", c.relation},
          {"predicted_object", c.predicted_object},
          {"probability", c.probability}};
}

ScoredFactCandidate candidateFromJson(const json& doc) {
  return {{doc.at("subject_id").get<std::string>(), optionalField(doc, "subject_label")},
          doc.at("relation_id").get<std::string>(),
          doc.at("predicted_object").get<std::string>(),
          doc.at("probability").get<double>()};
}

json voteJson(const Vote& v) {
  return {{"task_id", v.task_id},
          {"annotator_id", v.annotator_id},
          {"value", annotationValueName(v.value)},
          {"evidence_url", optionalJson(v.evidence_url)},
          {"snippet", optionalJson(v.snippet)},
          {"explanation", optionalJson(v.explanation)},
          {"timestamp", v.timestamp}};
}

Vote voteFromJson(const json& doc) {
  Vote v;
  v.task_id = doc.at("task_id").get<std::string>();
  v.annotator_id = doc.at("annotator_id").get<std::string>();
  auto value = parseAnnotationValue(doc.at("value").get<std::string>());
  if (!value) throw KbError(ErrorKind::kData, "unknown annotation value");
  v.value = *value;
  v.evidence_url = optionalField(doc, "evidence_url");
  v.snippet = optionalField(doc, "snippet");
  v.explanation = optionalField(doc, "explanation");
  v.timestamp = doc.value("timestamp", std::int64_t{0});
  return v;
}

struct EventToJson {
  json operator()(const CampaignCreated& e) const {
    return {{"type", "campaign_created"},
            {"campaign_id", e.campaign_id},
            {"created_at", e.created_at},
            {"votes_per_task", e.votes_per_task},
            {"relations", e.relations}};
  }
  json operator()(const TaskCreated& e) const {
    return {{"type", "task_created"},
            {"campaign_id", e.campaign_id},
            {"task", {{"task_id", e.task.task_id}, {"statement", e.task.statement}, {"candidate", candidateJson(e.task.candidate)}}}};
  }
  json operator()(const VoteSubmitted& e) const {
    return {{"type", "vote_submitted"}, {"campaign_id", e.campaign_id}, {"vote", voteJson(e.vote)}};
  }
};

}  // namespace

std::string serializeEvent(const Event& event) { return std::visit(EventToJson{}, event).dump(-1, ' ', false); }

Event parseEvent(std::string_view line) {
  try {
    auto doc = json::parse(line);
    auto type = doc.at("type").get<std::string>();
    auto campaign_id = doc.at("campaign_id").get<std::string>();
    if (type == "campaign_created") {
      return CampaignCreated{campaign_id, doc.at("created_at").get<std::int64_t>(),
                             doc.at("votes_per_task").get<int>(),
                             doc.at("relations").get<std::vector<std::string>>()};
    }
    if (type == "task_created") {
      const auto& t = doc.at("task");
      return TaskCreated{campaign_id, AnnotationTask{t.at("task_id").get<std::string>(),
                                                     t.at("statement").get<std::string>(),
                                                     candidateFromJson(t.at("candidate")), TaskStatus::kOpen}};
    }
    if (type == "vote_submitted") return VoteSubmitted{campaign_id, voteFromJson(doc.at("vote"))};
    throw KbError(ErrorKind::kData, "unknown event type '" + type + "'");
  } catch (const json::exception& e) {
    throw KbError(ErrorKind::kData, std::string("malformed event: ") + e.what());
  }
}

// --- fold --------------------------------------------------------------------------

const Campaign* State::find(const std::string& campaign_id) const {
  auto it = campaigns.find(campaign_id);
  return it == campaigns.end() ? nullptr : it->second.get();
}

namespace {

[[noreturn]] void inconsistent(const std::string& what) { throw KbError(ErrorKind::kData, "event log: " + what); }

struct Applier {
  State& next;

  std::shared_ptr<Campaign> editable(const std::string& id) {
    auto it = next.campaigns.find(id);
    if (it == next.campaigns.end()) inconsistent("unknown campaign " + id);
    auto copy = std::make_shared<Campaign>(*it->second);
    it->second = copy;
    return copy;
  }

  void operator()(const CampaignCreated& e) {
    if (next.campaigns.contains(e.campaign_id)) inconsistent("campaign " + e.campaign_id + " created twice");
    if (e.votes_per_task < 1) inconsistent("votes_per_task < 1");
    auto c = std::make_shared<Campaign>();
    c->campaign_id = e.campaign_id;
    c->created_at = e.created_at;
    c->votes_per_task = e.votes_per_task;
    c->relations.insert(e.relations.begin(), e.relations.end());
    next.campaigns.emplace(e.campaign_id, std::move(c));
  }

  void operator()(const TaskCreated& e) {
    auto c = editable(e.campaign_id);
    if (c->task_index.contains(e.task.task_id)) inconsistent("task " + e.task.task_id + " created twice");
    c->task_index.emplace(e.task.task_id, c->tasks.size());
    c->tasks.push_back(e.task);
    c->tasks.back().status = TaskStatus::kOpen;
    c->relations.insert(e.task.candidate.relation);
  }

  void operator()(const VoteSubmitted& e) {
    auto c = editable(e.campaign_id);
    auto it = c->task_index.find(e.vote.task_id);
    if (it == c->task_index.end()) inconsistent("vote for unknown task " + e.vote.task_id);
    auto& task = c->tasks[it->second];
    if (task.status == TaskStatus::kDone) inconsistent("vote for closed task " + e.vote.task_id);
    if (c->hasVoted(e.vote.task_id, e.vote.annotator_id)) inconsistent("second vote by " + e.vote.annotator_id);
    c->votes_by_task[e.vote.task_id].push_back(c->votes.size());
    c->votes.push_back(e.vote);
    if (static_cast<int>(c->votes_by_task[e.vote.task_id].size()) >= c->votes_per_task) {
      task.status = TaskStatus::kDone;
    }
  }
};

}  // namespace

State apply(const State& state, const Event& event) {
  State next = state;
  std::visit(Applier{next}, event);
  return next;
}

State replay(const std::vector<Event>& events) {
  State state;
  for (const auto& e : events) std::visit(Applier{state}, e);
  return state;
}

// --- log ---------------------------------------------------------------------------

std::vector<Event> readEventLog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<Event> events;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    ++line_no;
    if (end == std::string::npos) break;  // torn tail
    std::string_view line(text.data() + start, end - start);
    if (!line.empty()) {
      try {
        events.push_back(parseEvent(line));
      } catch (const KbError& e) {
        throw KbError(ErrorKind::kData, path + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    start = end + 1;
  }
  return events;
}

EventLog::EventLog(std::string path) : path_(std::move(path)) {
  namespace fs = std::filesystem;
  if (fs::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!text.empty() && text.back() != '\n') {
      auto keep = text.rfind('\n');
      fs::resize_file(path_, keep == std::string::npos ? 0 : keep + 1);
    }
  } else if (auto parent = fs::path(path_).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  file_ = std::fopen(path_.c_str(), "ab");
  if (!file_) throw KbError(ErrorKind::kData, "cannot open event log " + path_);
}

EventLog::~EventLog() {
  if (file_) std::fclose(file_);
}

void EventLog::append(const std::vector<Event>& events) {
  std::string block;
  for (const auto& e : events) block += serializeEvent(e) + "\n";
  if (std::fwrite(block.data(), 1, block.size(), file_) != block.size() || std::fflush(file_) != 0) {
    throw KbError(ErrorKind::kData, "cannot append to event log " + path_);
  }
  ::fsync(::fileno(file_));
}

// --- derived views -------------------------------------------------------------------

Agreement agreement(const std::vector<Vote>& a, const std::vector<Vote>& b) {
  auto index = [](const std::vector<Vote>& votes) {
    std::map<std::string, AnnotationValue> m;
    for (const auto& v : votes) {
      if (!m.emplace(v.task_id, v.value).second) {
        throw KbError(ErrorKind::kValidation, "two votes for task " + v.task_id + " from one side");
      }
    }
    return m;
  };
  auto ma = index(a), mb = index(b);
  if (ma.size() != mb.size() ||
      !std::equal(ma.begin(), ma.end(), mb.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw KbError(ErrorKind::kValidation, "agreement needs both vote sets to cover the same tasks");
  }
  Agreement result;
  result.tasks = ma.size();
  if (ma.empty()) return result;
  std::size_t exact = 0, binary = 0;
  for (auto ia = ma.begin(), ib = mb.begin(); ia != ma.end(); ++ia, ++ib) {
    exact += ia->second == ib->second;
    binary += isPositive(ia->second) == isPositive(ib->second);
  }
  result.exact = static_cast<double>(exact) / static_cast<double>(ma.size());
  result.binary = static_cast<double>(binary) / static_cast<double>(ma.size());
  return result;
}

std::optional<AnnotationValue> consensus(const std::vector<const Vote*>& votes) {
  if (votes.empty()) return std::nullopt;
  std::array<std::size_t, 5> counts{};
  for (const auto* v : votes) ++counts[static_cast<std::size_t>(v->value)];
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] >= counts[best]) best = i;
  }
  return static_cast<AnnotationValue>(best);
}

Summary summarize(const Campaign& campaign) {
  Summary s;
  for (const auto& r : campaign.relations) s.per_relation[r];
  for (const auto& task : campaign.tasks) {
    auto& rel = s.per_relation[task.candidate.relation];
    ++rel.tasks;
    ++s.tasks;
    if (task.status == TaskStatus::kDone) ++s.done;
    if (auto value = consensus(campaign.votesFor(task.task_id))) {
      ++rel.voted_tasks;
      ++rel.consensus_counts[static_cast<std::size_t>(*value)];
    }
  }
  s.votes = campaign.votes.size();
  return s;
}

ExportResult exportAccepted(const Campaign& campaign, ExportPolicy policy) {
  ExportResult result;
  for (const auto& task : campaign.tasks) {
    auto votes = campaign.votesFor(task.task_id);
    auto value = consensus(votes);
    if (!value) continue;
    bool accept = *value == AnnotationValue::kTrue ||
                  (policy == ExportPolicy::kPlausible && *value == AnnotationValue::kPlausible);
    if (!accept) continue;
    Assertion a{task.task_id, task.candidate, *value, std::nullopt};
    for (const auto* v : votes) {
      if (v->value == *value && v->evidence_url) {
        a.evidence_url = v->evidence_url;
        break;
      }
    }
    if (policy == ExportPolicy::kStrict && !a.evidence_url) continue;
    result.assertions.push_back(std::move(a));
  }
  result.summary = summarize(campaign);
  return result;
}

// --- service -----------------------------------------------------------------------

ReviewService::ReviewService(const std::string& log_path, Clock clock)
    : clock_(clock ? std::move(clock)
                   : Clock([] {
                       return std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                           .count();
                     })),
      log_(log_path),
      state_(std::make_shared<const State>(replay(readEventLog(log_path)))) {}

std::shared_ptr<const State> ReviewService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return state_;
}

std::shared_ptr<const Campaign> ReviewService::campaign(const std::string& campaign_id) const {
  auto state = snapshot();
  auto it = state->campaigns.find(campaign_id);
  if (it == state->campaigns.end()) throw KbError(ErrorKind::kNotFound, "unknown campaign " + campaign_id);
  return it->second;
}

void ReviewService::commit(const std::vector<Event>& events) {
  // Validate by folding first so a rejected event never reaches the log.
  auto current = snapshot();
  State next = *current;
  for (const auto& e : events) next = review::apply(next, e);
  log_.append(events);
  std::lock_guard lock(snapshot_mu_);
  state_ = std::make_shared<const State>(std::move(next));
}

std::string ReviewService::createCampaign(const std::vector<AnnotationTask>& tasks, int votes_per_task) {
  if (tasks.empty()) throw KbError(ErrorKind::kValidation, "campaign needs at least one task");
  if (votes_per_task < 1) throw KbError(ErrorKind::kValidation, "votes_per_task must be >= 1");
  std::vector<std::string> ids;
  std::set<std::string> relations;
  for (const auto& t : tasks) {
    if (t.task_id != makeTaskId(t.candidate)) {
      throw KbError(ErrorKind::kValidation, "task id " + t.task_id + " does not match its candidate");
    }
    if (trim(t.statement).empty()) throw KbError(ErrorKind::kValidation, "task " + t.task_id + " has no statement");
    ids.push_back(t.task_id);
    relations.insert(t.candidate.relation);
  }
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw KbError(ErrorKind::kConflict, "duplicate task id " + *dup);
  }
  std::string material = std::to_string(votes_per_task);
  for (const auto& id : ids) material += "\n" + id;
  auto id = "c" + toHex(stableHash(material));

  std::lock_guard lock(write_mu_);
  if (snapshot()->find(id)) return id;
  std::vector<Event> events;
  events.push_back(CampaignCreated{id, clock_(), votes_per_task, {relations.begin(), relations.end()}});
  for (const auto& t : tasks) events.push_back(TaskCreated{id, t});
  commit(events);
  return id;
}

std::optional<AnnotationTask> ReviewService::nextTask(const std::string& campaign_id,
                                                      const std::string& annotator_id) const {
  if (trim(annotator_id).empty()) throw KbError(ErrorKind::kValidation, "annotator id required");
  auto c = campaign(campaign_id);
  for (const auto& task : c->tasks) {
    if (task.status == TaskStatus::kOpen && !c->hasVoted(task.task_id, annotator_id)) return task;
  }
  return std::nullopt;
}

VoteOutcome ReviewService::submitVote(const std::string& campaign_id, Vote vote) {
  if (trim(vote.annotator_id).empty()) return {false, "annotator id required"};
  if (auto violation = voteViolation(vote)) return {false, *violation};
  std::lock_guard lock(write_mu_);
  auto c = campaign(campaign_id);
  const auto* task = c->task(vote.task_id);
  if (!task) throw KbError(ErrorKind::kNotFound, "unknown task " + vote.task_id);
  if (c->hasVoted(vote.task_id, vote.annotator_id)) return {false, "already voted"};
  if (task->status == TaskStatus::kDone) return {false, "task closed"};
  if (vote.timestamp == 0) vote.timestamp = clock_();
  commit({VoteSubmitted{campaign_id, std::move(vote)}});
  return {true, ""};
}

Agreement ReviewService::agreementBetween(const std::string& campaign_id, const std::string& annotator_a,
                                          const std::string& annotator_b) const {
  auto c = campaign(campaign_id);
  std::vector<Vote> a, b;
  for (const auto& v : c->votes) {
    if (v.annotator_id == annotator_a) a.push_back(v);
    if (v.annotator_id == annotator_b) b.push_back(v);
  }
  return agreement(a, b);
}

ExportResult ReviewService::exportAccepted(const std::string& campaign_id, ExportPolicy policy) const {
  return review::exportAccepted(*campaign(campaign_id), policy);
}

Summary ReviewService::summary(const std::string& campaign_id) const { return summarize(*campaign(campaign_id)); }

}  // namespace kbforge::review
