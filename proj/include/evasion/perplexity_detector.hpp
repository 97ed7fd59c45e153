#pragma once

#include <memory>
#include <span>

#include "evasion/detector.hpp"
#include "evasion/ngram.hpp"

namespace evasion {

/// Scores text by its perplexity under a reference LM:
///
///   ai_probability = 1 / (1 + exp(-(tau - PPL) / scale))
///
/// Low perplexity (the machine-text signature) maps to high ai-probability.
class PerplexityDetector final : public Detector {
 public:
  PerplexityDetector(DetectorDescriptor descriptor, std::shared_ptr<const NgramModel> lm,
                     double tau, double scale);

  /// tau = midpoint of the two class mean perplexities; scale = pooled
  /// standard deviation of the per-text perplexities. Throws DataError when
  /// a class is empty or the pooled deviation is zero.
  static std::shared_ptr<PerplexityDetector> calibrate(std::string id,
                                                       std::span<const Tokens> human_texts,
                                                       std::span<const Tokens> ai_texts,
                                                       std::shared_ptr<const NgramModel> lm,
                                                       double threshold = 0.5);

  double ai_probability(std::span<const std::string> tokens) const;

  double tau() const noexcept { return tau_; }
  double scale() const noexcept { return scale_; }
  const NgramModel& lm() const noexcept { return *lm_; }
  std::shared_ptr<const NgramModel> lm_ptr() const noexcept { return lm_; }

 private:
  Outcome evaluate(const TextSample& text) const override;

  std::shared_ptr<const NgramModel> lm_;
  double tau_;
  double scale_;
};

}  // namespace evasion
