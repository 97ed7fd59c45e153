#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "evasion/detector.hpp"

namespace httplib {
class Server;
}

namespace evasion {

/// One canned reply. An empty body on a 200 means "answer from the backend".
struct ScriptedResponse {
  int status = 200;
  std::string body;
};

struct MockServerConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::string path = "/detect";
  /// Which field the server answers with.
  Polarity polarity = Polarity::reports_ai_prob;
  /// Scores texts once the script is exhausted. Without a backend the
  /// server answers 0.5.
  DetectorPtr backend;
  /// Replies served in order, one per scoring request, before the backend.
  std::vector<ScriptedResponse> script;
};

struct RequestRecord {
  std::string method;
  std::string path;
  std::string body;
  int status = 0;
};

/// In-process HTTP server speaking the remote detector protocol. GET
/// /health answers 200. Thread-safe; stops on destruction.
class MockDetectorServer {
 public:
  /// Binds and starts serving. Throws Error when the port is unavailable.
  explicit MockDetectorServer(MockServerConfig config);
  ~MockDetectorServer();

  MockDetectorServer(const MockDetectorServer&) = delete;
  MockDetectorServer& operator=(const MockDetectorServer&) = delete;

  int port() const noexcept { return port_; }
  std::string url() const;
  std::vector<RequestRecord> request_log() const;
  std::size_t scoring_requests() const;

  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  void handle_score(const std::string& body, int& status, std::string& reply);

  MockServerConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<RequestRecord> log_;
  std::size_t script_pos_ = 0;
  std::size_t scoring_requests_ = 0;
};

}  // namespace evasion
