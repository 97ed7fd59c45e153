#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evasion/corpus.hpp"
#include "evasion/detector.hpp"
#include "evasion/embedder.hpp"
#include "evasion/metrics.hpp"
#include "evasion/ngram.hpp"

namespace evasion {

struct PerplexitySummary {
  Summary human;
  Summary ai;
  Summary paraphrased;

  friend bool operator==(const PerplexitySummary&, const PerplexitySummary&) = default;
};

struct EvalReport {
  std::string detector_id;
  double threshold = 0.5;
  std::size_t n = 0;
  double asr = 0.0;    // percent of paraphrased texts classified human
  double auroc = 0.0;  // human vs paraphrased, paraphrased positive
  double f1 = 0.0;     // same pairing, at the detector threshold
  double mean_similarity = 0.0;  // ai vs paraphrased
  PerplexitySummary perplexity;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-detector threshold overrides; detectors not listed use their
/// descriptor threshold.
using ThresholdConfig = std::map<std::string, double>;

struct CorpusScores {
  std::vector<double> human;
  std::vector<double> ai;
  std::vector<double> paraphrased;
};

/// Scores every side of every pair; throws DataError naming the first pair
/// without a paraphrase.
CorpusScores score_corpus(const Detector& detector, std::span<const PairedSample> pairs);

/// Pairs whose paraphrase is the unmodified ai text (the baseline column).
std::vector<PairedSample> baseline_pairs(std::span<const PairedSample> pairs);

struct CorpusStatistics {
  double mean_similarity = 0.0;
  std::vector<double> similarities;
  std::vector<double> human_perplexity;
  std::vector<double> ai_perplexity;
  std::vector<double> paraphrased_perplexity;
  PerplexitySummary perplexity;
};

/// Detector-independent statistics: similarity and perplexity per class.
CorpusStatistics corpus_statistics(std::span<const PairedSample> pairs, const NgramModel& lm,
                                   const Embedder& embedder);

EvalReport make_report(const DetectorDescriptor& detector, double threshold,
                       const CorpusScores& scores, const CorpusStatistics& stats);

/// One report per detector for a paraphrased corpus.
std::vector<EvalReport> evaluate(std::span<const PairedSample> outputs,
                                 std::span<const DetectorPtr> detectors, const NgramModel& lm,
                                 const Embedder& embedder, const ThresholdConfig& thresholds = {});

enum class Metric { asr, auroc, f1 };
std::string_view to_string(Metric metric) noexcept;
Metric parse_metric(std::string_view text);

struct CrossCell {
  EvalReport report;
  std::vector<RocPoint> roc;
};

struct NamedOutputs {
  std::string name;
  std::vector<PairedSample> pairs;
};

/// Rows are detectors, columns are "baseline" followed by each named output.
struct CrossEvaluation {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<CrossCell>> cells;  // [row][column]
  std::vector<CorpusStatistics> column_stats;
};

/// Evaluates the unmodified ai texts of `eval_corpus` (baseline) and every
/// named output corpus against every detector.
CrossEvaluation cross_evaluate(std::span<const PairedSample> eval_corpus,
                               std::span<const NamedOutputs> outputs,
                               std::span<const DetectorPtr> detectors, const NgramModel& lm,
                               const Embedder& embedder, const ThresholdConfig& thresholds = {});

struct CrossMatrix {
  Metric metric = Metric::asr;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> cells;
  std::vector<double> column_means;  // every column, baseline included
  std::vector<double> row_means;     // over non-baseline columns; NaN if none
};

CrossMatrix cross_matrix(const CrossEvaluation& evaluation, Metric metric);

/// Builds a matrix from given cells (fixtures, external results).
CrossMatrix make_matrix(Metric metric, std::vector<std::string> rows,
                        std::vector<std::string> columns, std::vector<std::vector<double>> cells);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const CrossMatrix& matrix);
void write_matrix_csv(std::ostream& out, const CrossMatrix& matrix);
void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc);

/// Writes reports_<column>.json, matrix_{asr,auroc,f1}.{csv,json},
/// roc/<detector>__<column>.csv and perplexity/<column>_<class>.csv under dir.
void write_cross_evaluation(const std::filesystem::path& dir, const CrossEvaluation& evaluation,
                            std::span<const NamedOutputs> outputs,
                            std::span<const PairedSample> eval_corpus);

}  // namespace evasion
