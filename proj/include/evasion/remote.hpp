#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "evasion/detector.hpp"

namespace evasion {

using Duration = std::chrono::nanoseconds;

/// Time source for rate limiting and backoff. ManualClock lets tests run
/// timing contracts in simulated time.
class Clock {
 public:
  virtual ~Clock() = default;
  /// Time since an arbitrary fixed origin.
  virtual Duration now() const = 0;
  virtual void sleep_until(Duration deadline) = 0;
  void sleep_for(Duration d) { sleep_until(now() + d); }
};

class SystemClock final : public Clock {
 public:
  Duration now() const override;
  void sleep_until(Duration deadline) override;
};

/// Simulated clock: sleeping advances time to the deadline instantly.
class ManualClock final : public Clock {
 public:
  Duration now() const override;
  void sleep_until(Duration deadline) override;
  void advance(Duration d);

 private:
  mutable std::mutex mu_;
  Duration now_{0};
};

/// Token bucket with capacity `burst` refilled at `rate` tokens per second.
/// Callers reserve a token under the lock and sleep outside it, so
/// concurrent callers are admitted in arrival order at the configured rate.
class TokenBucket {
 public:
  TokenBucket(double rate_per_second, double burst, std::shared_ptr<Clock> clock);

  /// Blocks until a token is available; returns the admission time.
  Duration acquire();

 private:
  double rate_;
  double burst_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  double tokens_;
  Duration last_;
};

struct ClientPolicy {
  double rate_limit = 5.0;  // requests per second
  int burst = 1;
  int max_retries = 3;
  Duration backoff_base = std::chrono::milliseconds(200);
  Duration timeout = std::chrono::seconds(10);
  bool cache_enabled = true;

  void validate() const;
};

/// Thread-safe ai-probability cache keyed by detector id and a SHA-256 of
/// the normalized text.
class ScoreCache {
 public:
  struct Entry {
    double ai_probability;
    RawScore raw;
  };

  static std::string key(std::string_view detector_id, std::string_view text);

  std::optional<Entry> find(const std::string& key) const;
  void insert(const std::string& key, Entry entry);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, Entry> entries_;
};

/// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Client for the generic remote detector protocol:
///   POST <url><path>  {"text": "..."}  ->  200 {"ai_probability": p}
/// ({"human_probability": p} or {"label": "ai"|"human"} per polarity).
///
/// Descriptor config keys: "url" (scheme://host:port, required), "path"
/// (default "/detect"), "api_key_env" (optional; sent as a bearer token).
class RemoteDetector final : public Detector {
 public:
  struct Stats {
    std::size_t network_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
  };

  RemoteDetector(DetectorDescriptor descriptor, ClientPolicy policy,
                 std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
                 std::shared_ptr<ScoreCache> cache = std::make_shared<ScoreCache>());

  Stats stats() const;
  const ClientPolicy& policy() const noexcept { return policy_; }

 private:
  Outcome evaluate(const TextSample& text) const override;
  RawScore parse_body(const std::string& body) const;

  ClientPolicy policy_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<ScoreCache> cache_;
  mutable TokenBucket bucket_;
  std::string url_;
  std::string path_;
  std::string api_key_env_;
  mutable std::atomic<std::size_t> network_calls_{0};
  mutable std::atomic<std::size_t> cache_hits_{0};
  mutable std::atomic<std::size_t> retries_{0};
};

}  // namespace evasion
