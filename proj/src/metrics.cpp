#include "evasion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "evasion/errors.hpp"

namespace evasion {

double asr(std::span<const double> ai_scores, double threshold) {
  if (ai_scores.empty()) throw DataError("ASR of an empty score list");
  const auto evaded = std::count_if(ai_scores.begin(), ai_scores.end(),
                                    [&](double s) { return s < threshold; });
  return 100.0 * static_cast<double>(evaded) / static_cast<double>(ai_scores.size());
}

double auroc(std::span<const double> human_scores, std::span<const double> ai_scores) {
  if (human_scores.empty() || ai_scores.empty())
    throw DataError("AUROC needs at least one score per class");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(human_scores.size() + ai_scores.size());
  for (double s : human_scores) items.push_back({s, false});
  for (double s : ai_scores) items.push_back({s, true});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the rank sum of positives; tied blocks share rank (lo + hi) / 2,
  // so doubling keeps everything integral and exact.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const std::size_t twice_rank = (i + 1) + j;  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (items[k].positive) twice_rank_sum += twice_rank;
    i = j;
  }
  const std::size_t m = ai_scores.size();
  const std::size_t n = human_scores.size();
  // 2U = 2R - m(m+1); the pairwise count is greater + ties/2 = U.
  const std::size_t twice_u = twice_rank_sum - m * (m + 1);
  const double u = static_cast<double>(twice_u / 2) + (twice_u % 2 ? 0.5 : 0.0);
  return u / (static_cast<double>(n) * static_cast<double>(m));
}

ConfusionCounts confusion(std::span<const double> human_scores,
                          std::span<const double> ai_scores, double threshold) {
  ConfusionCounts c;
  for (double s : ai_scores) (s >= threshold ? c.tp : c.fn) += 1;
  for (double s : human_scores) (s >= threshold ? c.fp : c.tn) += 1;
  return c;
}

double f1(const ConfusionCounts& counts) {
  const std::size_t denom = 2 * counts.tp + counts.fp + counts.fn;
  if (denom == 0) throw DataError("F1 is undefined when tp, fp and fn are all zero");
  return 2.0 * static_cast<double>(counts.tp) / static_cast<double>(denom);
}

std::vector<RocPoint> roc_curve(std::span<const double> human_scores,
                                std::span<const double> ai_scores) {
  if (human_scores.empty() || ai_scores.empty())
    throw DataError("ROC needs at least one score per class");
  std::vector<double> thresholds(human_scores.begin(), human_scores.end());
  thresholds.insert(thresholds.end(), ai_scores.begin(), ai_scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<RocPoint> curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  const double n = static_cast<double>(human_scores.size());
  const double m = static_cast<double>(ai_scores.size());
  for (double t : thresholds) {
    const auto c = confusion(human_scores, ai_scores, t);
    curve.push_back({static_cast<double>(c.fp) / n, static_cast<double>(c.tp) / m, t});
  }
  return curve;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.median = s.n % 2 ? sorted[s.n / 2] : 0.5 * (sorted[s.n / 2 - 1] + sorted[s.n / 2]);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

}  // namespace evasion
