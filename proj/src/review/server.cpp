#include "kbforge/review/server.hpp"

#include "httplib.h"
#include "json.hpp"
#include "kbforge/kbcore/error.hpp"

namespace kbforge::review {

using nlohmann::json;

namespace {

json taskJson(const AnnotationTask& t) {
  const auto& c = t.candidate;
  return {{"task_id", t.task_id},
          {"statement", t.statement},
          {"status", t.status == TaskStatus::kOpen ? "open" : "done"},
          {"candidate",
           {{"subject_id", c.subject.id},
            {"subject_label", c.subject.label ? json(*c.subject.label) : json(nullptr)},
            {"relation_id", c.relation},
            {"predicted_object", c.predicted_object},
            {"probability", c.probability}}}};
}

AnnotationTask taskFromJson(const json& j) {
  const auto& c = j.at("candidate");
  AnnotationTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.statement = j.at("statement").get<std::string>();
  t.candidate.subject.id = c.at("subject_id").get<std::string>();
  if (c.contains("subject_label") && !c["subject_label"].is_null()) {
    t.candidate.subject.label = c["subject_label"].get<std::string>();
  }
  t.candidate.relation = c.at("relation_id").get<std::string>();
  t.candidate.predicted_object = c.at("predicted_object").get<std::string>();
  t.candidate.probability = c.at("probability").get<double>();
  return t;
}

std::optional<std::string> optionalString(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  auto s = j[key].get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

json summaryJson(const Summary& s) {
  json relations = json::object();
  for (const auto& [relation, r] : s.per_relation) {
    json counts = json::object();
    for (auto v : kAllAnnotationValues) counts[std::string(annotationValueName(v))] = r.consensus_counts[static_cast<std::size_t>(v)];
    relations[relation] = {{"tasks", r.tasks}, {"voted_tasks", r.voted_tasks}, {"counts", counts}};
  }
  return {{"relations", relations}, {"tasks", s.tasks}, {"done", s.done}, {"votes", s.votes}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false), "application/json");
}

void replyError(httplib::Response& res, int status, const char* code, const std::string& message) {
  reply(res, status, {{"code", code}, {"message", message}});
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const KbError& e) {
    switch (e.kind()) {
      case ErrorKind::kNotFound:
        replyError(res, 404, "not_found", e.what());
        break;
      case ErrorKind::kConflict:
        replyError(res, 409, "conflict", e.what());
        break;
      case ErrorKind::kValidation:
        replyError(res, 400, "validation", e.what());
        break;
      default:
        replyError(res, 500, "internal", e.what());
    }
  } catch (const json::exception& e) {
    replyError(res, 400, "validation", std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    replyError(res, 500, "internal", e.what());
  }
}

std::string requireParam(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw KbError(ErrorKind::kValidation, std::string("missing query parameter '") + name + "'");
  }
  return req.get_param_value(name);
}

}  // namespace

struct ReviewServer::Impl {
  explicit Impl(ReviewService& s) : service(s) {}
  ReviewService& service;
  httplib::Server server;
};

ReviewServer::ReviewServer(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  srv.Post("/campaigns", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      std::vector<AnnotationTask> tasks;
      for (const auto& t : body.at("tasks")) tasks.push_back(taskFromJson(t));
      int votes_per_task = body.value("votes_per_task", kDefaultVotesPerTask);
      reply(res, 200, {{"campaign_id", svc.createCampaign(tasks, votes_per_task)}});
    });
  });

  srv.Get(R"(/campaigns/([^/]+)/next)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto task = svc.nextTask(req.matches[1], requireParam(req, "annotator"));
      reply(res, 200, {{"task", task ? taskJson(*task) : json(nullptr)}});
    });
  });

  srv.Post(R"(/campaigns/([^/]+)/votes)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      Vote vote;
      vote.task_id = body.at("task_id").get<std::string>();
      vote.annotator_id = body.at("annotator_id").get<std::string>();
      auto value = parseAnnotationValue(body.at("value").get<std::string>());
      if (!value) throw KbError(ErrorKind::kValidation, "unknown annotation value");
      vote.value = *value;
      vote.evidence_url = optionalString(body, "evidence_url");
      vote.snippet = optionalString(body, "snippet");
      vote.explanation = optionalString(body, "explanation");
      vote.timestamp = body.value("timestamp", std::int64_t{0});
      auto outcome = svc.submitVote(req.matches[1], std::move(vote));
      if (outcome.accepted) {
        reply(res, 200, {{"accepted", true}});
      } else {
        replyError(res, 422, "rejected", outcome.reason);
      }
    });
  });

  srv.Get(R"(/campaigns/([^/]+)/agreement)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto a = svc.agreementBetween(req.matches[1], requireParam(req, "a"), requireParam(req, "b"));
      reply(res, 200, {{"exact", a.exact}, {"binary", a.binary}, {"tasks", a.tasks}});
    });
  });

  srv.Get(R"(/campaigns/([^/]+)/export)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto policy = parseExportPolicy(req.has_param("policy") ? req.get_param_value("policy") : "strict");
      auto result = svc.exportAccepted(req.matches[1], policy);
      json assertions = json::array();
      for (const auto& a : result.assertions) {
        assertions.push_back({{"task_id", a.task_id},
                              {"subject_id", a.candidate.subject.id},
                              {"relation_id", a.candidate.relation},
                              {"object", a.candidate.predicted_object},
                              {"value", annotationValueName(a.value)},
                              {"evidence_url", a.evidence_url ? json(*a.evidence_url) : json(nullptr)}});
      }
      reply(res, 200, {{"assertions", assertions}, {"summary", summaryJson(result.summary)}});
    });
  });

  srv.Get(R"(/campaigns/([^/]+)/summary)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, summaryJson(svc.summary(req.matches[1]))); });
  });
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw KbError(ErrorKind::kTransport, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw KbError(ErrorKind::kTransport, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewServer::serve() { impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace kbforge::review
