#pragma once

#include <memory>
#include <string>

#include "kbforge/review/review.hpp"

namespace kbforge::review {

// JSON API over a ReviewService:
//   POST /campaigns                          {tasks: [...], votes_per_task?} -> {campaign_id}
//   GET  /campaigns/{id}/next?annotator=A    -> {task: {...} | null}
//   POST /campaigns/{id}/votes               {task_id, annotator_id, value, ...} -> {accepted: true}
//   GET  /campaigns/{id}/agreement?a=A&b=B   -> {exact, binary, tasks}
//   GET  /campaigns/{id}/export?policy=P     -> {assertions: [...], summary}
//   GET  /campaigns/{id}/summary             -> summary
//   GET  /health                             -> {status: "ok"}
// Errors are {code, message} with 400 validation, 404 not_found, 409
// conflict, 422 rejected (vote refused).
class ReviewServer {
 public:
  explicit ReviewServer(ReviewService& service);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  int bind(const std::string& host, int port);
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kbforge::review
