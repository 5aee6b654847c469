#include "httplib.h"

#include "json.hpp"

#include "kbforge/kbcore/error.hpp"
#include "kbforge/probing/probing.hpp"
#include "kbforge/probing/server.hpp"

namespace kbforge::probing {
namespace {

using nlohmann::json;

json parseBody(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw KbError(ErrorKind::kProtocol, what + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* name, const std::string& what) {
  if (!j.is_object() || !j.contains(name)) throw KbError(ErrorKind::kProtocol, what + ": missing '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw KbError(ErrorKind::kProtocol, what + ": bad '" + name + "'");
  }
}

std::vector<std::string> stringList(const json& j, const char* name, const std::string& what) {
  return field<std::vector<std::string>>(j, name, what);
}

}  // namespace

HttpBackend::HttpBackend(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.empty()) throw KbError(ErrorKind::kValidation, "empty backend endpoint");
  if (endpoint_.find("://") == std::string::npos) endpoint_ = "http://" + endpoint_;
}

namespace {

std::string checkResponse(const httplib::Result& res, const std::string& endpoint, const std::string& path) {
  auto what = endpoint + path;
  if (!res) throw KbError(ErrorKind::kTransport, what + ": " + httplib::to_string(res.error()));
  if (res->status >= 500) {
    throw KbError(ErrorKind::kTransport, what + ": HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw KbError(ErrorKind::kProtocol, what + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  return res->body;
}

}  // namespace

std::string HttpBackend::get(const std::string& path) {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  return checkResponse(client.Get(path), endpoint_, path);
}

std::string HttpBackend::post(const std::string& path, const std::string& body) {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  return checkResponse(client.Post(path, body, "application/json"), endpoint_, path);
}

BackendDescriptor HttpBackend::describe() {
  auto j = parseBody(get("/health"), "/health");
  BackendDescriptor d{endpoint_, 0, 0};
  if (j.is_object() && j.contains("vocab_size")) d.vocab_size = field<std::size_t>(j, "vocab_size", "/health");
  if (j.is_object() && j.contains("max_k")) d.max_k = field<std::size_t>(j, "max_k", "/health");
  return d;
}

std::vector<Prediction> HttpBackend::fillMask(const std::string& prompt, std::size_t k) {
  json request = {{"prompt", prompt}, {"k", k}};
  auto j = parseBody(post("/fill-mask", request.dump()), "/fill-mask");
  auto items = field<json>(j, "predictions", "/fill-mask");
  if (!items.is_array()) throw KbError(ErrorKind::kProtocol, "/fill-mask: predictions is not an array");
  std::vector<Prediction> out;
  for (const auto& item : items) {
    out.push_back(Prediction{field<std::string>(item, "token", "/fill-mask"),
                             field<double>(item, "probability", "/fill-mask"), 0});
  }
  return validatePredictions(std::move(out), k);
}

std::vector<std::string> HttpBackend::vocab() {
  std::vector<std::string> tokens;
  std::size_t pages = 1;
  for (std::size_t page = 0; page < pages; ++page) {
    auto path = "/vocab?page=" + std::to_string(page);
    auto j = parseBody(get(path), "/vocab");
    auto chunk = stringList(j, "tokens", "/vocab");
    tokens.insert(tokens.end(), chunk.begin(), chunk.end());
    pages = j.contains("pages") ? field<std::size_t>(j, "pages", "/vocab") : 1;
    if (page == 0 && j.contains("size") && !j.contains("pages")) break;
  }
  return tokens;
}

std::vector<std::string> HttpBackend::tokenize(const std::string& text) {
  json request = {{"text", text}};
  return stringList(parseBody(post("/tokenize", request.dump()), "/tokenize"), "tokens", "/tokenize");
}

bool HttpBackend::health() {
  try {
    auto j = parseBody(get("/health"), "/health");
    return j.is_object() && j.value("status", "") == "ok";
  } catch (const KbError&) {
    return false;
  }
}

// --- server -------------------------------------------------------------------------

struct BackendServer::Impl {
  Impl(Backend& b, std::size_t p) : backend(b), page_size(p) {}
  Backend& backend;
  std::size_t page_size;
  httplib::Server server;
};

namespace {

void replyJson(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void replyError(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  replyJson(res, status, {{"code", code}, {"message", message}});
}

// Runs a handler, mapping KbError kinds to HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const KbError& e) {
    int status = e.kind() == ErrorKind::kTransport ? 503 : 400;
    replyError(res, status, std::string(errorKindName(e.kind())), e.what());
  } catch (const json::exception& e) {
    replyError(res, 400, "validation", std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    replyError(res, 500, "internal", e.what());
  }
}

}  // namespace

BackendServer::BackendServer(Backend& backend, std::size_t vocab_page_size)
    : impl_(std::make_unique<Impl>(backend, std::max<std::size_t>(1, vocab_page_size))) {
  auto& srv = impl_->server;
  Impl* impl = impl_.get();

  srv.Post("/fill-mask", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      auto prompt = j.at("prompt").get<std::string>();
      auto k = j.at("k").get<std::size_t>();
      json items = json::array();
      for (const auto& p : impl->backend.fillMask(prompt, k)) {
        items.push_back({{"token", p.token}, {"probability", p.probability}});
      }
      replyJson(res, 200, {{"predictions", items}});
    });
  });

  srv.Get("/vocab", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto tokens = impl->backend.vocab();
      std::size_t page = 0;
      if (req.has_param("page")) {
        try {
          page = std::stoul(req.get_param_value("page"));
        } catch (const std::logic_error&) {
          throw KbError(ErrorKind::kValidation, "bad page parameter");
        }
      }
      std::size_t pages = std::max<std::size_t>(1, (tokens.size() + impl->page_size - 1) / impl->page_size);
      if (page >= pages) throw KbError(ErrorKind::kValidation, "page out of range");
      auto begin = std::min(tokens.size(), page * impl->page_size);
      auto end = std::min(tokens.size(), begin + impl->page_size);
      json body = {{"size", tokens.size()},
                   {"tokens", std::vector<std::string>(tokens.begin() + begin, tokens.begin() + end)},
                   {"page", page},
                   {"pages", pages}};
      replyJson(res, 200, body);
    });
  });

  srv.Post("/tokenize", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      replyJson(res, 200, {{"tokens", impl->backend.tokenize(j.at("text").get<std::string>())}});
    });
  });

  srv.Get("/health", [impl](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      auto d = impl->backend.describe();
      replyJson(res, 200, {{"status", "ok"}, {"vocab_size", d.vocab_size}, {"max_k", d.max_k}});
    });
  });
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind(const std::string& host, int port) {
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

void BackendServer::serve() { impl_->server.listen_after_bind(); }

void BackendServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace kbforge::probing
