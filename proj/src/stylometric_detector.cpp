#include "evasion/stylometric_detector.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "evasion/errors.hpp"
#include "evasion/rng.hpp"

namespace evasion {

namespace {

bool is_word(const std::string& token) {
  return std::any_of(token.begin(), token.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 128;
  });
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

const std::vector<std::string>& default_function_words() {
  static const std::vector<std::string> words = {
      "the", "a",  "an", "of", "and", "in",    "to",    "is",  "that", "this", "with", "for",
      "on",  "by", "as", "it", "we",  "which", "these", "are", "from", "be",   "was",  "our"};
  return words;
}

std::vector<double> stylometric_features(std::span<const std::string> tokens,
                                         std::span<const std::string> function_words) {
  std::size_t words = 0;
  std::size_t chars = 0;
  std::unordered_set<std::string_view> types;
  std::unordered_map<std::string_view, std::size_t> fw_index;
  for (std::size_t i = 0; i < function_words.size(); ++i) fw_index.emplace(function_words[i], i);
  std::vector<double> fw_counts(function_words.size(), 0.0);
  std::vector<double> sentence_lengths;
  std::size_t current = 0;

  for (const auto& t : tokens) {
    if (t == "." || t == "!" || t == "?") {
      if (current > 0) sentence_lengths.push_back(static_cast<double>(current));
      current = 0;
      continue;
    }
    if (!is_word(t)) continue;
    ++words;
    ++current;
    chars += t.size();
    types.insert(t);
    if (auto it = fw_index.find(t); it != fw_index.end()) fw_counts[it->second] += 1.0;
  }
  if (current > 0) sentence_lengths.push_back(static_cast<double>(current));

  std::vector<double> f;
  f.reserve(3 + function_words.size());
  const double n = static_cast<double>(words);
  f.push_back(words ? static_cast<double>(types.size()) / n : 0.0);
  f.push_back(words ? static_cast<double>(chars) / n : 0.0);
  double sd = 0.0;
  if (sentence_lengths.size() > 1) {
    double mean = 0.0;
    for (double l : sentence_lengths) mean += l;
    mean /= static_cast<double>(sentence_lengths.size());
    for (double l : sentence_lengths) sd += (l - mean) * (l - mean);
    sd = std::sqrt(sd / static_cast<double>(sentence_lengths.size()));
  }
  f.push_back(sd);
  for (double c : fw_counts) f.push_back(words ? c / n : 0.0);
  return f;
}

double LogisticModel::predict(std::span<const double> features) const {
  double z = bias;
  for (std::size_t i = 0; i < weights.size(); ++i)
    z += weights[i] * (features[i] - feature_mean[i]) / feature_scale[i];
  return sigmoid(z);
}

LogisticModel train_logistic(std::span<const std::vector<double>> features,
                             std::span<const int> labels, const LogisticOptions& options) {
  if (features.empty() || features.size() != labels.size())
    throw DataError("logistic regression needs one label per feature row");
  const std::size_t dim = features.front().size();
  for (const auto& row : features)
    if (row.size() != dim) throw DataError("feature rows have inconsistent width");

  LogisticModel m;
  m.feature_mean.assign(dim, 0.0);
  m.feature_scale.assign(dim, 0.0);
  const double n = static_cast<double>(features.size());
  for (const auto& row : features)
    for (std::size_t j = 0; j < dim; ++j) m.feature_mean[j] += row[j] / n;
  for (const auto& row : features)
    for (std::size_t j = 0; j < dim; ++j)
      m.feature_scale[j] += (row[j] - m.feature_mean[j]) * (row[j] - m.feature_mean[j]) / n;
  for (auto& s : m.feature_scale) s = s > 0.0 ? std::sqrt(s) : 1.0;

  std::vector<std::vector<double>> x(features.size(), std::vector<double>(dim));
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j)
      x[i][j] = (features[i][j] - m.feature_mean[j]) / m.feature_scale[j];

  Rng rng(options.seed);
  m.weights.resize(dim);
  for (auto& w : m.weights) w = (rng.uniform() - 0.5) * 0.02;

  std::vector<double> grad(dim);
  for (m.iterations = 0; m.iterations < options.max_iterations; ++m.iterations) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = m.bias;
      for (std::size_t j = 0; j < dim; ++j) z += m.weights[j] * x[i][j];
      const double err = sigmoid(z) - static_cast<double>(labels[i] != 0);
      for (std::size_t j = 0; j < dim; ++j) grad[j] += err * x[i][j] / n;
      grad_bias += err / n;
    }
    double max_abs = std::abs(grad_bias);
    for (std::size_t j = 0; j < dim; ++j) {
      grad[j] += options.l2 * m.weights[j];
      max_abs = std::max(max_abs, std::abs(grad[j]));
    }
    if (max_abs < options.tolerance) break;
    for (std::size_t j = 0; j < dim; ++j) m.weights[j] -= options.learning_rate * grad[j];
    m.bias -= options.learning_rate * grad_bias;
  }
  return m;
}

StylometricDetector::StylometricDetector(DetectorDescriptor descriptor,
                                         std::vector<std::string> function_words,
                                         LogisticModel model)
    : Detector(std::move(descriptor)),
      function_words_(std::move(function_words)),
      model_(std::move(model)) {
  const std::size_t dim = 3 + function_words_.size();
  if (model_.weights.size() != dim || model_.feature_mean.size() != dim ||
      model_.feature_scale.size() != dim)
    throw ConfigError("stylometric model width does not match its function-word list");
}

std::shared_ptr<StylometricDetector> StylometricDetector::train(
    std::string id, std::span<const Tokens> human_texts, std::span<const Tokens> ai_texts,
    std::vector<std::string> function_words, const LogisticOptions& options, double threshold) {
  if (human_texts.size() < kMinSamplesPerClass || ai_texts.size() < kMinSamplesPerClass)
    throw DataError("stylometric detector needs at least " +
                    std::to_string(kMinSamplesPerClass) + " texts per class");
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (const auto& t : human_texts) {
    features.push_back(stylometric_features(t, function_words));
    labels.push_back(0);
  }
  for (const auto& t : ai_texts) {
    features.push_back(stylometric_features(t, function_words));
    labels.push_back(1);
  }
  DetectorDescriptor d;
  d.id = std::move(id);
  d.kind = DetectorKind::stylometric;
  d.threshold = threshold;
  return std::make_shared<StylometricDetector>(std::move(d), std::move(function_words),
                                               train_logistic(features, labels, options));
}

double StylometricDetector::ai_probability(std::span<const std::string> tokens) const {
  return model_.predict(stylometric_features(tokens, function_words_));
}

Detector::Outcome StylometricDetector::evaluate(const TextSample& text) const {
  return {ai_probability(text.tokens)};
}

}  // namespace evasion
