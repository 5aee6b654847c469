// Serves a mock fill-mask table over the HTTP wire protocol so the pipeline
// can be exercised against a real endpoint without a model.

#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "kbforge/kbcore/error.hpp"
#include "kbforge/probing/probing.hpp"
#include "kbforge/probing/server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fill-mask wire protocol server backed by a mock table"};
  std::string table;
  std::string host = "127.0.0.1";
  int port = 8700;
  std::size_t page_size = 1000;
  app.add_option("table", table, "mock table file")->required();
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--page-size", page_size, "tokens per /vocab page");
  CLI11_PARSE(app, argc, argv);

  try {
    auto backend = kbforge::probing::MockBackend::loadFile(table);
    kbforge::probing::BackendServer server(backend, page_size);
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
    std::cerr << "mock backend on http://" << host << ":" << bound << "\n";
    server.serve();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  } catch (const kbforge::KbError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == kbforge::ErrorKind::kTransport ? 2 : 3;
  }
  return 0;
}
