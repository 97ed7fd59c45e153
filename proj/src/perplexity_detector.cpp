#include "evasion/perplexity_detector.hpp"

#include <cmath>

#include "evasion/errors.hpp"

namespace evasion {

namespace {

struct Moments {
  double mean = 0.0;
  double sum_sq = 0.0;  // sum of squared deviations
  std::size_t n = 0;
};

Moments perplexity_moments(const NgramModel& lm, std::span<const Tokens> texts) {
  Moments m;
  std::vector<double> values;
  values.reserve(texts.size());
  for (const auto& t : texts) values.push_back(lm.perplexity(t));
  m.n = values.size();
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(m.n);
  for (double v : values) m.sum_sq += (v - m.mean) * (v - m.mean);
  return m;
}

}  // namespace

PerplexityDetector::PerplexityDetector(DetectorDescriptor descriptor,
                                       std::shared_ptr<const NgramModel> lm, double tau,
                                       double scale)
    : Detector(std::move(descriptor)), lm_(std::move(lm)), tau_(tau), scale_(scale) {
  if (!lm_) throw ConfigError("perplexity detector needs a language model");
  if (!(scale_ > 0.0) || !std::isfinite(scale_) || !std::isfinite(tau_))
    throw ConfigError("perplexity detector needs finite tau and positive scale");
}

std::shared_ptr<PerplexityDetector> PerplexityDetector::calibrate(
    std::string id, std::span<const Tokens> human_texts, std::span<const Tokens> ai_texts,
    std::shared_ptr<const NgramModel> lm, double threshold) {
  if (human_texts.empty() || ai_texts.empty())
    throw DataError("perplexity calibration needs human and ai texts");
  const Moments h = perplexity_moments(*lm, human_texts);
  const Moments a = perplexity_moments(*lm, ai_texts);
  const double dof = static_cast<double>(h.n + a.n) - 2.0;
  const double pooled = dof > 0.0 ? std::sqrt((h.sum_sq + a.sum_sq) / dof) : 0.0;
  if (!(pooled > 0.0))
    throw DataError("perplexity calibration is degenerate (pooled deviation is zero); "
                    "provide more varied calibration texts");
  DetectorDescriptor d;
  d.id = std::move(id);
  d.kind = DetectorKind::perplexity;
  d.threshold = threshold;
  return std::make_shared<PerplexityDetector>(std::move(d), std::move(lm),
                                              0.5 * (h.mean + a.mean), pooled);
}

double PerplexityDetector::ai_probability(std::span<const std::string> tokens) const {
  const double z = (tau_ - lm_->perplexity(tokens)) / scale_;
  return 1.0 / (1.0 + std::exp(-z));
}

Detector::Outcome PerplexityDetector::evaluate(const TextSample& text) const {
  return {ai_probability(text.tokens)};
}

}  // namespace evasion
