#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace evasion {

/// Binary-decision counts with "ai" as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Percentage of ai-side scores strictly below the threshold (classified
/// human). A score equal to the threshold counts as detected.
double asr(std::span<const double> ai_scores, double threshold);

/// Mann-Whitney AUROC with ai as the positive class: the fraction of
/// (ai, human) pairs with ai > human, ties counting one half. Computed from
/// average ranks in O((n+m) log(n+m)).
double auroc(std::span<const double> human_scores, std::span<const double> ai_scores);

/// Counts decisions at `threshold` (score >= threshold means ai).
ConfusionCounts confusion(std::span<const double> human_scores,
                          std::span<const double> ai_scores, double threshold);

/// 2tp / (2tp + fp + fn); zero when tp == 0 and fp + fn > 0. Throws when
/// tp + fp + fn == 0.
double f1(const ConfusionCounts& counts);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // decisions are score >= threshold; +inf for the origin
};

/// ROC curve over every distinct score, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> human_scores,
                                std::span<const double> ai_scores);

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;

  friend bool operator==(const Summary&, const Summary&) = default;
};

Summary summarize(std::span<const double> values);

}  // namespace evasion
