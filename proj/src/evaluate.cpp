#include "evasion/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "evasion/errors.hpp"

namespace evasion {

namespace {

void require_paraphrases(std::span<const PairedSample> pairs) {
  for (const auto& p : pairs)
    if (!p.paraphrased) throw DataError("pair '" + p.id + "' has no paraphrased text");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json to_json(const Summary& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"std", s.std}, {"n", s.n}};
}

std::string file_safe(std::string name) {
  for (auto& c : name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return name;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

CorpusScores score_corpus(const Detector& detector, std::span<const PairedSample> pairs) {
  require_paraphrases(pairs);
  CorpusScores s;
  for (const auto& p : pairs) {
    s.human.push_back(detector.score(p.human).ai_probability);
    s.ai.push_back(detector.score(p.ai).ai_probability);
    s.paraphrased.push_back(detector.score(*p.paraphrased).ai_probability);
  }
  return s;
}

std::vector<PairedSample> baseline_pairs(std::span<const PairedSample> pairs) {
  std::vector<PairedSample> out(pairs.begin(), pairs.end());
  for (auto& p : out) p.set_paraphrase(p.ai.text, "baseline");
  return out;
}

CorpusStatistics corpus_statistics(std::span<const PairedSample> pairs, const NgramModel& lm,
                                   const Embedder& embedder) {
  require_paraphrases(pairs);
  if (pairs.empty()) throw DataError("cannot evaluate an empty corpus");
  CorpusStatistics st;
  for (const auto& p : pairs) {
    st.similarities.push_back(semantic_similarity(p.ai, *p.paraphrased, embedder));
    st.human_perplexity.push_back(lm.perplexity(p.human.tokens));
    st.ai_perplexity.push_back(lm.perplexity(p.ai.tokens));
    st.paraphrased_perplexity.push_back(lm.perplexity(p.paraphrased->tokens));
  }
  st.mean_similarity = summarize(st.similarities).mean;
  st.perplexity = {summarize(st.human_perplexity), summarize(st.ai_perplexity),
                   summarize(st.paraphrased_perplexity)};
  return st;
}

EvalReport make_report(const DetectorDescriptor& detector, double threshold,
                       const CorpusScores& scores, const CorpusStatistics& stats) {
  EvalReport r;
  r.detector_id = detector.id;
  r.threshold = threshold;
  r.n = scores.paraphrased.size();
  r.asr = asr(scores.paraphrased, threshold);
  r.auroc = auroc(scores.human, scores.paraphrased);
  const auto counts = confusion(scores.human, scores.paraphrased, threshold);
  r.f1 = counts.tp + counts.fp + counts.fn == 0 ? 0.0 : f1(counts);
  r.mean_similarity = stats.mean_similarity;
  r.perplexity = stats.perplexity;
  return r;
}

std::vector<EvalReport> evaluate(std::span<const PairedSample> outputs,
                                 std::span<const DetectorPtr> detectors, const NgramModel& lm,
                                 const Embedder& embedder, const ThresholdConfig& thresholds) {
  require_paraphrases(outputs);
  const auto stats = corpus_statistics(outputs, lm, embedder);
  std::vector<EvalReport> reports;
  for (const auto& d : detectors) {
    auto it = thresholds.find(d->id());
    const double t = it == thresholds.end() ? d->descriptor().threshold : it->second;
    reports.push_back(make_report(d->descriptor(), t, score_corpus(*d, outputs), stats));
  }
  return reports;
}

std::string_view to_string(Metric metric) noexcept {
  switch (metric) {
    case Metric::asr: return "asr";
    case Metric::auroc: return "auroc";
    case Metric::f1: return "f1";
  }
  return "asr";
}

Metric parse_metric(std::string_view text) {
  for (auto m : {Metric::asr, Metric::auroc, Metric::f1})
    if (text == to_string(m)) return m;
  throw ConfigError("unknown metric '" + std::string(text) + "'");
}

CrossEvaluation cross_evaluate(std::span<const PairedSample> eval_corpus,
                               std::span<const NamedOutputs> outputs,
                               std::span<const DetectorPtr> detectors, const NgramModel& lm,
                               const Embedder& embedder, const ThresholdConfig& thresholds) {
  if (detectors.empty()) throw ConfigError("cross evaluation needs at least one detector");
  CrossEvaluation ev;
  std::vector<std::vector<PairedSample>> columns;
  columns.push_back(baseline_pairs(eval_corpus));
  ev.columns.push_back("baseline");
  for (const auto& o : outputs) {
    ev.columns.push_back(o.name);
    columns.push_back(o.pairs);
  }
  for (const auto& c : columns) ev.column_stats.push_back(corpus_statistics(c, lm, embedder));
  for (const auto& d : detectors) {
    ev.rows.push_back(d->id());
    auto it = thresholds.find(d->id());
    const double t = it == thresholds.end() ? d->descriptor().threshold : it->second;
    auto& row = ev.cells.emplace_back();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto scores = score_corpus(*d, columns[c]);
      row.push_back({make_report(d->descriptor(), t, scores, ev.column_stats[c]),
                     roc_curve(scores.human, scores.paraphrased)});
    }
  }
  return ev;
}

CrossMatrix make_matrix(Metric metric, std::vector<std::string> rows,
                        std::vector<std::string> columns, std::vector<std::vector<double>> cells) {
  if (cells.size() != rows.size()) throw DataError("matrix row count mismatch");
  for (const auto& r : cells)
    if (r.size() != columns.size()) throw DataError("matrix is not rectangular");
  CrossMatrix m;
  m.metric = metric;
  m.rows = std::move(rows);
  m.columns = std::move(columns);
  m.cells = std::move(cells);
  m.column_means.assign(m.columns.size(), 0.0);
  for (const auto& r : m.cells)
    for (std::size_t c = 0; c < r.size(); ++c) m.column_means[c] += r[c];
  for (auto& v : m.column_means)
    v = m.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                       : v / static_cast<double>(m.rows.size());
  for (const auto& r : m.cells) {
    if (r.size() < 2) {
      m.row_means.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 1; c < r.size(); ++c) s += r[c];
    m.row_means.push_back(s / static_cast<double>(r.size() - 1));
  }
  return m;
}

CrossMatrix cross_matrix(const CrossEvaluation& evaluation, Metric metric) {
  std::vector<std::vector<double>> cells;
  for (const auto& row : evaluation.cells) {
    auto& out = cells.emplace_back();
    for (const auto& cell : row) {
      switch (metric) {
        case Metric::asr: out.push_back(cell.report.asr); break;
        case Metric::auroc: out.push_back(cell.report.auroc); break;
        case Metric::f1: out.push_back(cell.report.f1); break;
      }
    }
  }
  return make_matrix(metric, evaluation.rows, evaluation.columns, std::move(cells));
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"detector_id", r.detector_id},
          {"threshold", r.threshold},
          {"n", r.n},
          {"asr", r.asr},
          {"auroc", r.auroc},
          {"f1", r.f1},
          {"mean_similarity", r.mean_similarity},
          {"perplexity",
           {{"human", to_json(r.perplexity.human)},
            {"ai", to_json(r.perplexity.ai)},
            {"paraphrased", to_json(r.perplexity.paraphrased)}}}};
}

nlohmann::json to_json(const CrossMatrix& m) {
  auto nullable = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : m.cells) cells.push_back(nullable(r));
  return {{"metric", to_string(m.metric)}, {"rows", m.rows},
          {"columns", m.columns},          {"cells", cells},
          {"column_means", nullable(m.column_means)},
          {"row_means", nullable(m.row_means)}};
}

void write_matrix_csv(std::ostream& out, const CrossMatrix& m) {
  out << "detector";
  for (const auto& c : m.columns) out << ',' << c;
  out << ",mean\n";
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    out << m.rows[r];
    for (double v : m.cells[r]) out << ',' << fmt(v);
    out << ',' << fmt(m.row_means[r]) << '\n';
  }
  out << "mean";
  for (double v : m.column_means) out << ',' << fmt(v);
  out << ",\n";
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc) {
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc) out << fmt(p.fpr) << ',' << fmt(p.tpr) << ',' << fmt(p.threshold) << '\n';
}

void write_cross_evaluation(const std::filesystem::path& dir, const CrossEvaluation& ev,
                            std::span<const NamedOutputs> outputs,
                            std::span<const PairedSample> eval_corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "roc");
  fs::create_directories(dir / "perplexity");
  for (std::size_t c = 0; c < ev.columns.size(); ++c) {
    nlohmann::json reports = nlohmann::json::array();
    for (std::size_t r = 0; r < ev.rows.size(); ++r) {
      reports.push_back(to_json(ev.cells[r][c].report));
      auto roc = open_out(dir / "roc" /
                          (file_safe(ev.rows[r]) + "__" + file_safe(ev.columns[c]) + ".csv"));
      write_roc_csv(roc, ev.cells[r][c].roc);
    }
    open_out(dir / ("reports_" + file_safe(ev.columns[c]) + ".json")) << reports.dump(2) << '\n';

    const auto& pairs = c == 0 ? eval_corpus : std::span<const PairedSample>(outputs[c - 1].pairs);
    const auto& st = ev.column_stats[c];
    const std::pair<const char*, const std::vector<double>*> classes[] = {
        {"human", &st.human_perplexity},
        {"ai", &st.ai_perplexity},
        {"paraphrased", &st.paraphrased_perplexity}};
    for (const auto& [name, values] : classes) {
      auto out = open_out(dir / "perplexity" / (file_safe(ev.columns[c]) + "_" + name + ".csv"));
      out << "id,perplexity\n";
      for (std::size_t i = 0; i < values->size(); ++i)
        out << pairs[i].id << ',' << fmt((*values)[i]) << '\n';
    }
  }
  for (auto metric : {Metric::asr, Metric::auroc, Metric::f1}) {
    const auto m = cross_matrix(ev, metric);
    const std::string base = "matrix_" + std::string(to_string(metric));
    auto csv = open_out(dir / (base + ".csv"));
    write_matrix_csv(csv, m);
    open_out(dir / (base + ".json")) << to_json(m).dump(2) << '\n';
  }
}

}  // namespace evasion
