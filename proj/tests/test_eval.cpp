#include <cmath>
#include <sstream>

#include "doctest.h"
#include "evasion/embedder.hpp"
#include "evasion/errors.hpp"
#include "evasion/evaluate.hpp"
#include "evasion/metrics.hpp"
#include "helpers.hpp"

using namespace evasion;

namespace {

double brute_auroc(const std::vector<double>& human, const std::vector<double>& ai) {
  double wins = 0.0;
  for (double a : ai)
    for (double h : human) wins += a > h ? 1.0 : a == h ? 0.5 : 0.0;
  return wins / static_cast<double>(human.size() * ai.size());
}

std::vector<double> random_scores(Rng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.between(0, 9)) / 10.0 : rng.uniform();
  return v;
}

nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(std::string(EVASION_TEST_DIR) + "/fixtures/" + name);
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

TfidfEmbedder embedder_for(const std::vector<PairedSample>& pairs) {
  auto docs = token_lists(pairs, Label::ai);
  const auto human = token_lists(pairs, Label::human);
  docs.insert(docs.end(), human.begin(), human.end());
  return TfidfEmbedder::fit(docs);
}

}  // namespace

TEST_CASE("ASR counts scores strictly below the threshold") {
  CHECK(asr(std::vector<double>{0.1, 0.4, 0.5, 0.9}, 0.5) == 50.0);
  CHECK(asr(std::vector<double>{0.6, 0.7}, 0.5) == 0.0);
  CHECK(asr(std::vector<double>{0.0, 0.0, 0.0}, 0.5) == 100.0);
  CHECK_THROWS(asr(std::vector<double>{}, 0.5));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_scores(rng, rng.between(1, 50), i % 2 == 0);
    const double t = rng.uniform();
    double below = 0;
    for (double x : s) below += x < t;
    CHECK(asr(s, t) == 100.0 * below / static_cast<double>(s.size()));
  }
}

TEST_CASE("AUROC hand examples") {
  CHECK(auroc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9}) == 1.0);
  CHECK(auroc(std::vector<double>{0.8, 0.9}, std::vector<double>{0.1, 0.2}) == 0.0);
  CHECK(auroc(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5}) == 0.5);
  CHECK(auroc(std::vector<double>{0.1, 0.6}, std::vector<double>{0.5}) == 0.5);
  CHECK_THROWS(auroc(std::vector<double>{}, std::vector<double>{0.5}));
}

TEST_CASE("AUROC equals brute-force pair counting") {
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    const bool ties = i % 2 == 1;
    const auto human = random_scores(rng, rng.between(1, 200), ties);
    const auto ai = random_scores(rng, rng.between(1, 200), ties);
    const double a = auroc(human, ai);
    CHECK(a == brute_auroc(human, ai));
    CHECK(std::abs(auroc(ai, human) - (1.0 - a)) < 1e-12);
    std::vector<double> h2, a2;
    for (double x : human) h2.push_back(std::exp(3 * x) - 7);
    for (double x : ai) a2.push_back(std::exp(3 * x) - 7);
    CHECK(std::abs(auroc(h2, a2) - a) < 1e-12);
  }
}

TEST_CASE("F1 and confusion counts") {
  CHECK(std::abs(f1({30, 10, 0, 20}) - 2.0 / 3.0) < 1e-12);
  CHECK(f1({0, 5, 5, 5}) == 0.0);
  CHECK_THROWS(f1({0, 0, 10, 0}));
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    ConfusionCounts c{rng.between(1, 50), rng.between(0, 50), rng.between(0, 50), rng.between(0, 50)};
    const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    CHECK(std::abs(f1(c) - 2 * precision * recall / (precision + recall)) < 1e-12);
  }
  const auto c = confusion(std::vector<double>{0.1, 0.6, 0.5}, std::vector<double>{0.9, 0.2}, 0.5);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.fp == 2);
  CHECK(c.tn == 1);
}

TEST_CASE("ROC curve endpoints and area") {
  Rng rng(5);
  const auto human = random_scores(rng, 40, true);
  const auto ai = random_scores(rng, 30, true);
  const auto roc = roc_curve(human, ai);
  REQUIRE(roc.size() >= 2);
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(std::isinf(roc.front().threshold));
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].fpr >= roc[i - 1].fpr);
    CHECK(roc[i].tpr >= roc[i - 1].tpr);
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
  }
  CHECK(std::abs(area - auroc(human, ai)) < 1e-12);
}

TEST_CASE("summaries") {
  const auto s = summarize(std::vector<double>{1, 2, 3, 10});
  CHECK(s.mean == 4.0);
  CHECK(s.median == 2.5);
  CHECK(std::abs(s.std - std::sqrt(50.0 / 3.0)) < 1e-12);
  CHECK(summarize(std::vector<double>{7}).std == 0.0);
}

TEST_CASE("TF-IDF similarity") {
  const auto docs = std::vector<Tokens>{tokenize("the cat sat on the mat ."), tokenize("a dog ran ."),
                                        tokenize("the model is robust .")};
  const auto emb = TfidfEmbedder::fit(docs);
  CHECK(std::abs(emb.idf("the") - (std::log(4.0 / 3.0) + 1)) < 1e-12);
  CHECK(std::abs(emb.idf("unseen") - (std::log(4.0) + 1)) < 1e-12);
  const auto a = TextSample::make("a", "the cat sat on the mat .", Label::ai);
  const auto same = TextSample::make("b", "The cat sat on the mat.", Label::paraphrased);
  const auto disjoint = TextSample::make("c", "dogs run fast", Label::paraphrased);
  CHECK(std::abs(semantic_similarity(a, same, emb) - 1.0) < 1e-12);
  CHECK(semantic_similarity(a, disjoint, emb) == 0.0);

  const auto pairs = synth_corpus(3, 20, testing::default_params());
  const auto big = embedder_for(pairs);
  for (const auto& p : pairs) {
    auto t = p.ai.tokens;
    t[t.size() / 2] = "zebra";
    const auto changed = TextSample::from_tokens("x", t, Label::paraphrased);
    CHECK(semantic_similarity(p.ai, changed, big) >= 0.9);
    CHECK(semantic_similarity(p.ai, changed, big) == doctest::Approx(semantic_similarity(changed, p.ai, big)));
  }
  CHECK_THROWS_AS(cosine({}, {{"a", 1.0}}), DataError);
}

TEST_CASE("precomputed embeddings") {
  testing::TempDir dir("emb");
  {
    std::ofstream out(dir / "v.jsonl");
    out << R"({"id": "p/ai", "vector": [1, 0, 1]})" << "\n" << R"({"id": "p/paraphrased", "vector": [1, 0, 0]})" << "\n";
  }
  const auto emb = PrecomputedEmbedder::load(dir / "v.jsonl");
  const auto a = TextSample::make("p/ai", "x", Label::ai);
  const auto b = TextSample::make("p/paraphrased", "y", Label::paraphrased);
  CHECK(std::abs(semantic_similarity(a, b, emb) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK_THROWS(emb.embed(TextSample::make("q", "z", Label::ai)));
}

TEST_CASE("evaluate on unmodified outputs reproduces the baseline") {
  auto pairs = synth_corpus(8, 40, testing::default_params());
  const auto lm = NgramModel::fit(token_lists(pairs, Label::ai), 3, 0.1);
  const auto emb = embedder_for(pairs);
  const std::vector<DetectorPtr> dets{make_function_detector("len", [](const TextSample& t) {
    return std::min(1.0, static_cast<double>(t.tokens.size()) / 300.0);
  })};
  const auto base = baseline_pairs(pairs);
  const auto reports = evaluate(base, dets, lm, emb);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].mean_similarity == doctest::Approx(1.0));
  CHECK(reports[0].perplexity.paraphrased.mean == reports[0].perplexity.ai.mean);
  const auto cross = cross_evaluate(pairs, std::vector<NamedOutputs>{{"same", base}}, dets, lm, emb);
  CHECK(cross.cells[0][0].report == cross.cells[0][1].report);
  CHECK(cross.cells[0][0].report == reports[0]);

  const std::vector<DetectorPtr> zero{make_function_detector("zero", [](const TextSample&) { return 0.0; })};
  const auto z = evaluate(base, zero, lm, emb);
  CHECK(z[0].asr == 100.0);
  CHECK(z[0].auroc == 0.5);
  CHECK(z[0].f1 == 0.0);

  const auto t = evaluate(base, dets, lm, emb, ThresholdConfig{{"len", 0.0}});
  CHECK(t[0].asr == 0.0);
  CHECK(t[0].threshold == 0.0);

  pairs[3].set_paraphrase("fine");
  auto partial = pairs;
  partial[0].paraphrased.reset();
  try {
    evaluate(partial, dets, lm, emb);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(pairs[0].id) != std::string::npos);
  }
}

TEST_CASE("cross evaluation shapes and files") {
  const auto pairs = synth_corpus(9, 30, testing::default_params());
  const auto lm = NgramModel::fit(token_lists(pairs, Label::ai), 3, 0.1);
  const auto emb = embedder_for(pairs);
  const std::vector<DetectorPtr> dets{
      make_function_detector("a", [](const TextSample& t) { return t.tokens.size() % 2 ? 0.9 : 0.1; }),
      make_function_detector("b", [](const TextSample&) { return 0.6; })};
  std::vector<NamedOutputs> outs{{"x", baseline_pairs(pairs)}, {"y", baseline_pairs(pairs)}};
  const auto ev = cross_evaluate(pairs, outs, dets, lm, emb);
  CHECK(ev.columns == std::vector<std::string>{"baseline", "x", "y"});
  CHECK(ev.rows == std::vector<std::string>{"a", "b"});
  const auto m = cross_matrix(ev, Metric::asr);
  CHECK(m.cells.size() == 2);
  CHECK(m.cells[0].size() == 3);
  CHECK(m.cells[1][2] == 0.0);

  testing::TempDir dir("cross");
  write_cross_evaluation(dir.path(), ev, outs, pairs);
  for (const char* f : {"matrix_asr.csv", "matrix_auroc.json", "matrix_f1.csv", "reports_baseline.json",
                        "reports_y.json", "roc/a__x.csv", "perplexity/y_paraphrased.csv"})
    CHECK(std::filesystem::exists(dir / f));
  const auto csv = testing::read_file(dir / "matrix_asr.csv");
  CHECK(csv.rfind("detector,baseline,x,y,mean\n", 0) == 0);
  CHECK(parse_metric("auroc") == Metric::auroc);
  CHECK_THROWS_AS(parse_metric("accuracy"), ConfigError);
  CHECK_THROWS_AS(cross_evaluate(pairs, outs, std::vector<DetectorPtr>{}, lm, emb), ConfigError);
}

TEST_CASE("published cross-detector tables reproduce their mean rows") {
  for (const char* name : {"cross_asr.json", "cross_auroc.json"}) {
    const auto fx = load_fixture(name);
    const auto m = make_matrix(parse_metric(fx["metric"].get<std::string>()),
                               fx["rows"].get<std::vector<std::string>>(),
                               fx["columns"].get<std::vector<std::string>>(),
                               fx["cells"].get<std::vector<std::vector<double>>>());
    const auto& reported = fx["reported_column_means"];
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      if (reported[c].is_null()) continue;
      // The table entries are rounded to two decimals, so the mean of the
      // rounded cells may differ from the printed mean by one unit.
      CHECK(std::abs(m.column_means[c] - reported[c].get<double>()) <= fx["rounding"].get<double>() + 1e-9);
    }
    CHECK(m.row_means.size() == 6);
  }
  const auto asr_fx = load_fixture("cross_asr.json");
  CHECK(asr_fx["cells"][0][0] == 4.0);
  CHECK(asr_fx["cells"][4][0] == 0.0);
  const auto au_fx = load_fixture("cross_auroc.json");
  CHECK(au_fx["cells"][0][0] == 1.0);
  CHECK_THROWS_AS(make_matrix(Metric::asr, {"r"}, {"c"}, {{1.0, 2.0}}), DataError);
}
