#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evasion/detector.hpp"

namespace evasion {

/// Function words tracked when a caller does not supply its own list.
const std::vector<std::string>& default_function_words();

/// Style features of one text, in this order: type-token ratio, mean word
/// length, sentence-length standard deviation (burstiness), then the
/// relative frequency of each function word.
std::vector<double> stylometric_features(std::span<const std::string> tokens,
                                         std::span<const std::string> function_words);

struct LogisticOptions {
  std::size_t max_iterations = 3000;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  double tolerance = 1e-7;  // stop when the gradient max-norm drops below this
  std::uint64_t seed = 17;
};

/// Binary logistic regression trained by full-batch gradient descent on
/// standardized features.
struct LogisticModel {
  std::vector<double> weights;  // one per feature
  double bias = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::size_t iterations = 0;

  double predict(std::span<const double> features) const;
};

LogisticModel train_logistic(std::span<const std::vector<double>> features,
                             std::span<const int> labels, const LogisticOptions& options = {});

class StylometricDetector final : public Detector {
 public:
  static constexpr std::size_t kMinSamplesPerClass = 20;

  StylometricDetector(DetectorDescriptor descriptor, std::vector<std::string> function_words,
                      LogisticModel model);

  /// Trains on labelled texts (ai = positive). Throws DataError when either
  /// class has fewer than kMinSamplesPerClass texts.
  static std::shared_ptr<StylometricDetector> train(
      std::string id, std::span<const Tokens> human_texts, std::span<const Tokens> ai_texts,
      std::vector<std::string> function_words = default_function_words(),
      const LogisticOptions& options = {}, double threshold = 0.5);

  double ai_probability(std::span<const std::string> tokens) const;

  const LogisticModel& model() const noexcept { return model_; }
  const std::vector<std::string>& function_words() const noexcept { return function_words_; }

 private:
  Outcome evaluate(const TextSample& text) const override;

  std::vector<std::string> function_words_;
  LogisticModel model_;
};

}  // namespace evasion
