#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evasion/corpus.hpp"

namespace evasion {

enum class DetectorKind { perplexity, stylometric, remote, scripted };
enum class Polarity { reports_ai_prob, reports_human_prob, binary };
enum class BinaryLabel { human, ai };

std::string_view to_string(DetectorKind kind) noexcept;
std::string_view to_string(Polarity polarity) noexcept;
DetectorKind parse_detector_kind(std::string_view text);
Polarity parse_polarity(std::string_view text);

struct DetectorDescriptor {
  std::string id;
  DetectorKind kind = DetectorKind::scripted;
  Polarity polarity = Polarity::reports_ai_prob;
  /// Decision threshold on ai_probability used by ASR and F1.
  double threshold = 0.5;
  /// Kind-specific settings (endpoint, model file, ...).
  nlohmann::json config = nlohmann::json::object();
};

/// A detector's answer before polarity normalization.
using RawScore = std::variant<double, BinaryLabel>;

/// Maps a raw answer to the canonical ai-probability. Probabilities outside
/// [0,1] (or non-finite) raise NormalizationError; a label paired with a
/// probability polarity (or vice versa) raises ProtocolError.
double normalize_score(Polarity polarity, const RawScore& raw);

struct DetectorScore {
  std::string detector_id;
  double ai_probability = 0.0;
  RawScore raw = 0.0;
  std::chrono::nanoseconds latency{0};
  bool cached = false;
  int retries = 0;
};

/// R(X, Y) = 1 - mean ai_probability over the scores. Throws on an empty list.
double reward(std::span<const DetectorScore> scores);

/// Uniform scoring contract. Implementations must be safe to call from
/// several threads at once.
class Detector {
 public:
  explicit Detector(DetectorDescriptor descriptor);
  virtual ~Detector() = default;

  const DetectorDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::string& id() const noexcept { return descriptor_.id; }

  /// Scores one text. Throws DataError on empty text and
  /// DetectorUnavailable when the backend cannot answer.
  DetectorScore score(const TextSample& text) const;

 protected:
  struct Outcome {
    RawScore raw;
    bool cached = false;
    int retries = 0;
  };
  virtual Outcome evaluate(const TextSample& text) const = 0;

 private:
  DetectorDescriptor descriptor_;
};

using DetectorPtr = std::shared_ptr<const Detector>;

/// Wraps an arbitrary function; used for scripted detectors in tests and
/// for constant-reward baselines.
class FunctionDetector final : public Detector {
 public:
  using Fn = std::function<RawScore(const TextSample&)>;
  FunctionDetector(DetectorDescriptor descriptor, Fn fn);

 private:
  Outcome evaluate(const TextSample& text) const override;
  Fn fn_;
};

/// Convenience: a scripted detector reporting ai-probability fn(text).
DetectorPtr make_function_detector(std::string id, std::function<double(const TextSample&)> fn,
                                   double threshold = 0.5);

/// Scores text with every detector, in order.
std::vector<DetectorScore> score_all(std::span<const DetectorPtr> detectors,
                                     const TextSample& text);

/// Holds detectors by id; ids are unique.
class DetectorRegistry {
 public:
  void add(DetectorPtr detector);
  DetectorPtr get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<DetectorPtr> select(std::span<const std::string> ids) const;
  std::vector<DetectorPtr> all() const;

 private:
  std::map<std::string, DetectorPtr, std::less<>> detectors_;
};

}  // namespace evasion
