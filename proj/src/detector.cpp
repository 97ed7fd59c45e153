#include "evasion/detector.hpp"

#include <cmath>

#include "evasion/errors.hpp"

namespace evasion {

std::string_view to_string(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::perplexity: return "perplexity";
    case DetectorKind::stylometric: return "stylometric";
    case DetectorKind::remote: return "remote";
    case DetectorKind::scripted: return "scripted";
  }
  return "scripted";
}

std::string_view to_string(Polarity polarity) noexcept {
  switch (polarity) {
    case Polarity::reports_ai_prob: return "reports_ai_prob";
    case Polarity::reports_human_prob: return "reports_human_prob";
    case Polarity::binary: return "binary";
  }
  return "reports_ai_prob";
}

DetectorKind parse_detector_kind(std::string_view text) {
  for (auto k : {DetectorKind::perplexity, DetectorKind::stylometric, DetectorKind::remote,
                 DetectorKind::scripted})
    if (text == to_string(k)) return k;
  throw ConfigError("unknown detector kind '" + std::string(text) + "'");
}

Polarity parse_polarity(std::string_view text) {
  for (auto p : {Polarity::reports_ai_prob, Polarity::reports_human_prob, Polarity::binary})
    if (text == to_string(p)) return p;
  throw ConfigError("unknown detector polarity '" + std::string(text) + "'");
}

double normalize_score(Polarity polarity, const RawScore& raw) {
  if (polarity == Polarity::binary) {
    const auto* label = std::get_if<BinaryLabel>(&raw);
    if (!label) throw ProtocolError("binary detector returned a probability");
    return *label == BinaryLabel::ai ? 1.0 : 0.0;
  }
  const auto* p = std::get_if<double>(&raw);
  if (!p) throw ProtocolError("probability detector returned a label");
  if (!std::isfinite(*p) || *p < 0.0 || *p > 1.0)
    throw NormalizationError("detector probability " + std::to_string(*p) + " outside [0,1]");
  return polarity == Polarity::reports_human_prob ? 1.0 - *p : *p;
}

double reward(std::span<const DetectorScore> scores) {
  if (scores.empty()) throw DataError("reward needs at least one detector score");
  double sum = 0.0;
  for (const auto& s : scores) sum += s.ai_probability;
  return 1.0 - sum / static_cast<double>(scores.size());
}

Detector::Detector(DetectorDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  if (descriptor_.id.empty()) throw ConfigError("detector id must not be empty");
  if (!(descriptor_.threshold >= 0.0 && descriptor_.threshold <= 1.0))
    throw ConfigError("detector '" + descriptor_.id + "': threshold must be in [0,1]");
}

DetectorScore Detector::score(const TextSample& text) const {
  if (text.tokens.empty()) throw DataError("cannot score empty text '" + text.id + "'");
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome = evaluate(text);
  DetectorScore s;
  s.detector_id = descriptor_.id;
  s.ai_probability = normalize_score(descriptor_.polarity, outcome.raw);
  s.raw = outcome.raw;
  s.cached = outcome.cached;
  s.retries = outcome.retries;
  s.latency = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::steady_clock::now() - start);
  return s;
}

FunctionDetector::FunctionDetector(DetectorDescriptor descriptor, Fn fn)
    : Detector(std::move(descriptor)), fn_(std::move(fn)) {}

Detector::Outcome FunctionDetector::evaluate(const TextSample& text) const {
  return {fn_(text)};
}

DetectorPtr make_function_detector(std::string id, std::function<double(const TextSample&)> fn,
                                   double threshold) {
  DetectorDescriptor d;
  d.id = std::move(id);
  d.kind = DetectorKind::scripted;
  d.threshold = threshold;
  return std::make_shared<FunctionDetector>(
      std::move(d), [fn = std::move(fn)](const TextSample& t) -> RawScore { return fn(t); });
}

std::vector<DetectorScore> score_all(std::span<const DetectorPtr> detectors,
                                     const TextSample& text) {
  std::vector<DetectorScore> out;
  out.reserve(detectors.size());
  for (const auto& d : detectors) out.push_back(d->score(text));
  return out;
}

void DetectorRegistry::add(DetectorPtr detector) {
  if (!detector) throw ConfigError("null detector");
  const std::string id = detector->id();
  if (!detectors_.emplace(id, std::move(detector)).second)
    throw ConfigError("duplicate detector id '" + id + "'");
}

DetectorPtr DetectorRegistry::get(std::string_view id) const {
  auto it = detectors_.find(id);
  if (it == detectors_.end()) throw ConfigError("unknown detector '" + std::string(id) + "'");
  return it->second;
}

bool DetectorRegistry::contains(std::string_view id) const {
  return detectors_.find(id) != detectors_.end();
}

std::vector<DetectorPtr> DetectorRegistry::select(std::span<const std::string> ids) const {
  std::vector<DetectorPtr> out;
  for (const auto& id : ids) out.push_back(get(id));
  return out;
}

std::vector<DetectorPtr> DetectorRegistry::all() const {
  std::vector<DetectorPtr> out;
  for (const auto& [_, d] : detectors_) out.push_back(d);
  return out;
}

}  // namespace evasion
