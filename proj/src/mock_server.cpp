#include "evasion/mock_server.hpp"

#include "evasion/errors.hpp"
#include "httplib.h"

namespace evasion {

MockDetectorServer::MockDetectorServer(MockServerConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/health", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
    std::lock_guard lock(mu_);
    log_.push_back({req.method, req.path, req.body, 200});
  });
  server_->Post(config_.path, [this](const httplib::Request& req, httplib::Response& res) {
    int status = 200;
    std::string reply;
    handle_score(req.body, status, reply);
    res.status = status;
    res.set_content(reply, "application/json");
    std::lock_guard lock(mu_);
    log_.push_back({req.method, req.path, req.body, status});
  });

  // httplib's default also sets SO_REUSEPORT, which would let two servers
  // share a port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ <= 0) throw Error("mock detector: cannot bind any port on " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port))
      throw Error("mock detector: port " + std::to_string(config_.port) + " on " +
                  config_.host + " is unavailable");
    port_ = config_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockDetectorServer::~MockDetectorServer() { stop(); }

void MockDetectorServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void MockDetectorServer::wait() {
  if (thread_.joinable()) thread_.join();
}

std::string MockDetectorServer::url() const {
  return "http://" + config_.host + ":" + std::to_string(port_);
}

std::vector<RequestRecord> MockDetectorServer::request_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockDetectorServer::scoring_requests() const {
  std::lock_guard lock(mu_);
  return scoring_requests_;
}

void MockDetectorServer::handle_score(const std::string& body, int& status, std::string& reply) {
  {
    std::lock_guard lock(mu_);
    ++scoring_requests_;
    if (script_pos_ < config_.script.size()) {
      const auto& step = config_.script[script_pos_++];
      if (step.status != 200 || !step.body.empty()) {
        status = step.status;
        reply = step.body.empty() ? "{\"error\":\"scripted failure\"}" : step.body;
        return;
      }
    }
  }

  std::string text;
  try {
    auto j = nlohmann::json::parse(body);
    text = j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    status = 400;
    reply = "{\"error\":\"expected {\\\"text\\\": string}\"}";
    return;
  }
  double p = 0.5;
  if (config_.backend) {
    auto sample = TextSample::make("request", text, Label::ai);
    if (sample.tokens.empty()) {
      status = 400;
      reply = "{\"error\":\"empty text\"}";
      return;
    }
    try {
      p = config_.backend->score(sample).ai_probability;
    } catch (const std::exception& e) {
      status = 500;
      reply = nlohmann::json{{"error", e.what()}}.dump();
      return;
    }
  }
  nlohmann::json out;
  switch (config_.polarity) {
    case Polarity::reports_ai_prob: out["ai_probability"] = p; break;
    case Polarity::reports_human_prob: out["human_probability"] = 1.0 - p; break;
    case Polarity::binary:
      out["label"] = p >= (config_.backend ? config_.backend->descriptor().threshold : 0.5)
                         ? "ai"
                         : "human";
      break;
  }
  status = 200;
  reply = out.dump();
}

}  // namespace evasion
