#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "kbforge/kbcore/types.hpp"

namespace kbforge::review {

// Votes a task needs before it is done.
inline constexpr int kDefaultVotesPerTask = 2;

enum class ExportPolicy { kStrict, kPlausible };

ExportPolicy parseExportPolicy(std::string_view name);  // KbError(kValidation) when unknown

struct Campaign {
  std::string campaign_id;
  std::int64_t created_at = 0;
  int votes_per_task = kDefaultVotesPerTask;
  std::set<std::string> relations;
  std::vector<AnnotationTask> tasks;  // stable order: creation order
  std::map<std::string, std::size_t> task_index;
  std::vector<Vote> votes;  // submission order
  std::map<std::string, std::vector<std::size_t>> votes_by_task;

  const AnnotationTask* task(const std::string& task_id) const;
  std::vector<const Vote*> votesFor(const std::string& task_id) const;
  bool hasVoted(const std::string& task_id, const std::string& annotator_id) const;
};

// --- events -------------------------------------------------------------------------

struct CampaignCreated {
  std::string campaign_id;
  std::int64_t created_at = 0;
  int votes_per_task = kDefaultVotesPerTask;
  std::vector<std::string> relations;

  friend bool operator==(const CampaignCreated&, const CampaignCreated&) = default;
};

struct TaskCreated {
  std::string campaign_id;
  AnnotationTask task;

  friend bool operator==(const TaskCreated&, const TaskCreated&) = default;
};

struct VoteSubmitted {
  std::string campaign_id;
  Vote vote;

  friend bool operator==(const VoteSubmitted&, const VoteSubmitted&) = default;
};

using Event = std::variant<CampaignCreated, TaskCreated, VoteSubmitted>;

std::string serializeEvent(const Event& event);  // one JSON line, no newline
Event parseEvent(std::string_view line);         // KbError(kData)

// Immutable state; apply() returns a new state sharing untouched campaigns.
struct State {
  std::map<std::string, std::shared_ptr<const Campaign>> campaigns;

  const Campaign* find(const std::string& campaign_id) const;
};

// Pure fold step. Events that contradict the state (vote for a missing task,
// second vote by the same annotator...) are KbError(kData).
State apply(const State& state, const Event& event);
State replay(const std::vector<Event>& events);

// --- event log -----------------------------------------------------------------------

// Reads every complete event. A torn final line (crash mid-append) is
// ignored; corruption anywhere else is KbError(kData).
std::vector<Event> readEventLog(const std::string& path);

class EventLog {
 public:
  // Creates the file if needed and cuts off a torn final line.
  explicit EventLog(std::string path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Appends and flushes to the OS before returning.
  void append(const std::vector<Event>& events);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

// --- derived views -------------------------------------------------------------------

struct Agreement {
  double exact = 0.0;
  double binary = 0.0;
  std::size_t tasks = 0;
};

// Both vote lists must cover the same task ids (one vote per task each).
Agreement agreement(const std::vector<Vote>& a, const std::vector<Vote>& b);

// Most frequent value; ties go to the value nearer False.
std::optional<AnnotationValue> consensus(const std::vector<const Vote*>& votes);

struct RelationSummary {
  std::size_t tasks = 0;
  std::size_t voted_tasks = 0;
  std::array<std::size_t, 5> consensus_counts{};  // indexed by AnnotationValue

  friend bool operator==(const RelationSummary&, const RelationSummary&) = default;
};

struct Summary {
  std::map<std::string, RelationSummary> per_relation;
  std::size_t tasks = 0;
  std::size_t done = 0;
  std::size_t votes = 0;
};

Summary summarize(const Campaign& campaign);

struct Assertion {
  std::string task_id;
  ScoredFactCandidate candidate;
  AnnotationValue value = AnnotationValue::kTrue;
  std::optional<std::string> evidence_url;

  friend bool operator==(const Assertion&, const Assertion&) = default;
};

struct ExportResult {
  std::vector<Assertion> assertions;  // task order
  Summary summary;
};

// strict: consensus True (True votes always carry evidence); plausible: True
// or Plausible.
ExportResult exportAccepted(const Campaign& campaign, ExportPolicy policy);

// --- service -------------------------------------------------------------------------

struct VoteOutcome {
  bool accepted = false;
  std::string reason;
};

// Campaign bookkeeping over an event log. Writes serialize through one mutex;
// readers work on the latest immutable snapshot.
class ReviewService {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit ReviewService(const std::string& log_path, Clock clock = {});

  // Id derives from the sorted task ids and votes_per_task, so posting the
  // same payload twice returns the same id without new events. Empty input
  // is kValidation, repeated task ids kConflict.
  std::string createCampaign(const std::vector<AnnotationTask>& tasks, int votes_per_task = kDefaultVotesPerTask);

  // First open task (creation order) the annotator has not voted on.
  std::optional<AnnotationTask> nextTask(const std::string& campaign_id, const std::string& annotator_id) const;

  VoteOutcome submitVote(const std::string& campaign_id, Vote vote);

  Agreement agreementBetween(const std::string& campaign_id, const std::string& annotator_a,
                             const std::string& annotator_b) const;
  ExportResult exportAccepted(const std::string& campaign_id, ExportPolicy policy) const;
  Summary summary(const std::string& campaign_id) const;

  std::shared_ptr<const State> snapshot() const;

 private:
  std::shared_ptr<const Campaign> campaign(const std::string& campaign_id) const;
  void commit(const std::vector<Event>& events);

  Clock clock_;
  EventLog log_;
  std::mutex write_mu_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const State> state_;
};

}  // namespace kbforge::review
