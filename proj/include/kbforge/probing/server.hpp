#pragma once

#include <memory>
#include <string>

#include "kbforge/probing/probing.hpp"

namespace kbforge::probing {

// Serves any Backend over the fill-mask wire protocol.
class BackendServer {
 public:
  explicit BackendServer(Backend& backend, std::size_t vocab_page_size = 1000);
  ~BackendServer();

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  // Returns the bound port (ephemeral when port == 0).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kbforge::probing
