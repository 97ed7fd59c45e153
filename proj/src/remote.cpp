#include "evasion/remote.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "evasion/errors.hpp"
#include "httplib.h"

namespace evasion {

Duration SystemClock::now() const {
  return std::chrono::duration_cast<Duration>(
      std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_until(Duration deadline) {
  const auto d = deadline - now();
  if (d > Duration::zero()) std::this_thread::sleep_for(d);
}

Duration ManualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_until(Duration deadline) {
  std::lock_guard lock(mu_);
  now_ = std::max(now_, deadline);
}

void ManualClock::advance(Duration d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

TokenBucket::TokenBucket(double rate_per_second, double burst, std::shared_ptr<Clock> clock)
    : rate_(rate_per_second), burst_(burst), clock_(std::move(clock)), tokens_(burst) {
  if (!(rate_ > 0.0)) throw ConfigError("rate limit must be positive");
  if (!(burst_ >= 1.0)) throw ConfigError("burst must be at least 1");
  last_ = clock_->now();
}

Duration TokenBucket::acquire() {
  Duration admit;
  {
    std::lock_guard lock(mu_);
    const Duration now = clock_->now();
    if (now > last_) {
      const double elapsed = std::chrono::duration<double>(now - last_).count();
      tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
      last_ = now;
    }
    tokens_ -= 1.0;
    if (tokens_ >= 0.0) return now;
    // Negative balance is a reservation; the caller waits until it is repaid.
    admit = last_ + std::chrono::duration_cast<Duration>(
                        std::chrono::duration<double>(-tokens_ / rate_));
  }
  clock_->sleep_until(admit);
  return admit;
}

void ClientPolicy::validate() const {
  if (!(rate_limit > 0.0)) throw ConfigError("client rate_limit must be positive");
  if (burst < 1) throw ConfigError("client burst must be at least 1");
  if (max_retries < 0) throw ConfigError("client max_retries must be nonnegative");
  if (backoff_base < Duration::zero()) throw ConfigError("client backoff must be nonnegative");
  if (timeout <= Duration::zero()) throw ConfigError("client timeout must be positive");
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string ScoreCache::key(std::string_view detector_id, std::string_view text) {
  std::string k(detector_id);
  k += ':';
  k += sha256_hex(normalize_text(text));
  return k;
}

std::optional<ScoreCache::Entry> ScoreCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(const std::string& key, Entry entry) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(key, std::move(entry));
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

RemoteDetector::RemoteDetector(DetectorDescriptor descriptor, ClientPolicy policy,
                               std::shared_ptr<Clock> clock, std::shared_ptr<ScoreCache> cache)
    : Detector(std::move(descriptor)),
      policy_(policy),
      clock_(std::move(clock)),
      cache_(std::move(cache)),
      bucket_((policy_.validate(), policy_.rate_limit), policy_.burst, clock_) {
  const auto& cfg = this->descriptor().config;
  if (!cfg.contains("url") || !cfg["url"].is_string())
    throw ConfigError("remote detector '" + id() + "' needs a \"url\" setting");
  url_ = cfg["url"].get<std::string>();
  path_ = cfg.value("path", std::string("/detect"));
  api_key_env_ = cfg.value("api_key_env", std::string());
}

RemoteDetector::Stats RemoteDetector::stats() const {
  return {network_calls_.load(), cache_hits_.load(), retries_.load()};
}

RawScore RemoteDetector::parse_body(const std::string& body) const {
  auto excerpt = [&] { return body.substr(0, 200); };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError("detector '" + id() + "' sent a non-JSON body: " + excerpt());
  }
  auto number = [&](const char* field) -> RawScore {
    if (!j.is_object() || !j.contains(field) || !j[field].is_number())
      throw ProtocolError("detector '" + id() + "' response lacks numeric \"" + field +
                          "\": " + excerpt());
    return j[field].get<double>();
  };
  switch (descriptor().polarity) {
    case Polarity::reports_ai_prob: return number("ai_probability");
    case Polarity::reports_human_prob: return number("human_probability");
    case Polarity::binary: {
      if (j.is_object() && j.contains("label") && j["label"].is_string()) {
        const auto label = j["label"].get<std::string>();
        if (label == "ai") return BinaryLabel::ai;
        if (label == "human") return BinaryLabel::human;
      }
      throw ProtocolError("detector '" + id() + "' response lacks label ai|human: " +
                          excerpt());
    }
  }
  throw ProtocolError("unsupported polarity");
}

Detector::Outcome RemoteDetector::evaluate(const TextSample& text) const {
  const std::string key = ScoreCache::key(id(), text.text);
  if (policy_.cache_enabled) {
    if (auto hit = cache_->find(key)) {
      ++cache_hits_;
      return {hit->raw, true, 0};
    }
  }

  httplib::Headers headers;
  if (!api_key_env_.empty()) {
    if (const char* token = std::getenv(api_key_env_.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const std::string body = nlohmann::json{{"text", text.text}}.dump();
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(policy_.timeout);

  std::string last_error;
  for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      clock_->sleep_for(policy_.backoff_base * (1LL << std::min(attempt - 1, 30)));
    }
    bucket_.acquire();
    ++network_calls_;
    httplib::Client client(url_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw DetectorUnavailable(id(), "HTTP " + std::to_string(res->status) + ": " +
                                          res->body.substr(0, 200));
    RawScore raw = parse_body(res->body);
    const double p = normalize_score(descriptor().polarity, raw);
    if (policy_.cache_enabled) cache_->insert(key, {p, raw});
    return {raw, false, attempt};
  }
  throw DetectorUnavailable(id(), "gave up after " + std::to_string(policy_.max_retries) +
                                      " retries (" + last_error + ")");
}

}  // namespace evasion
