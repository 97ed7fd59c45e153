#include <cmath>

#include "doctest.h"
#include "evasion/errors.hpp"
#include "evasion/metrics.hpp"
#include "evasion/perplexity_detector.hpp"
#include "evasion/pipeline.hpp"
#include "evasion/stylometric_detector.hpp"
#include "helpers.hpp"

using namespace evasion;

namespace {

DetectorScore with_prob(double p) {
  DetectorScore s;
  s.ai_probability = p;
  return s;
}

struct Fixture {
  std::vector<PairedSample> train;
  std::vector<PairedSample> eval;
  std::shared_ptr<const NgramModel> lm;

  Fixture() {
    const auto params = testing::default_params();
    auto all = synth_corpus(42, 300, params);
    train.assign(all.begin(), all.begin() + 200);
    eval.assign(all.begin() + 200, all.end());
    lm = std::make_shared<NgramModel>(NgramModel::fit(token_lists(train, Label::ai), 3, 0.1));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("normalize_score maps each polarity to ai-probability") {
  CHECK(normalize_score(Polarity::reports_ai_prob, 0.7) == 0.7);
  CHECK(std::abs(normalize_score(Polarity::reports_human_prob, 0.7) - 0.3) < 1e-15);
  CHECK(normalize_score(Polarity::binary, BinaryLabel::ai) == 1.0);
  CHECK(normalize_score(Polarity::binary, BinaryLabel::human) == 0.0);
  for (double p : {0.0, 0.125, 0.5, 0.9, 1.0})
    CHECK(1.0 - normalize_score(Polarity::reports_human_prob, p) == p);
  CHECK_THROWS_AS(normalize_score(Polarity::reports_ai_prob, 1.2), NormalizationError);
  CHECK_THROWS_AS(normalize_score(Polarity::reports_ai_prob, -0.1), NormalizationError);
  CHECK_THROWS_AS(normalize_score(Polarity::reports_ai_prob, std::nan("")), NormalizationError);
  CHECK_THROWS_AS(normalize_score(Polarity::binary, 0.5), ProtocolError);
  CHECK_THROWS_AS(normalize_score(Polarity::reports_ai_prob, BinaryLabel::ai), ProtocolError);
}

TEST_CASE("reward is one minus the mean ai-probability") {
  const std::vector<DetectorScore> two{with_prob(0.8), with_prob(0.6)};
  CHECK(std::abs(reward(two) - 0.3) < 1e-12);
  const std::vector<DetectorScore> one{with_prob(0.25)};
  CHECK(reward(one) == 0.75);
  CHECK_THROWS_AS(reward(std::span<const DetectorScore>{}), DataError);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    std::vector<DetectorScore> s;
    for (std::uint64_t k = rng.between(1, 6); k > 0; --k) s.push_back(with_prob(rng.uniform()));
    const double r = reward(s);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("detector scores carry latency and reject empty text") {
  const auto d = make_function_detector("half", [](const TextSample&) { return 0.5; });
  const auto s = d->score(TextSample::make("x", "some text", Label::ai));
  CHECK(s.detector_id == "half");
  CHECK(s.ai_probability == 0.5);
  CHECK(s.latency.count() >= 0);
  CHECK_THROWS_AS(d->score(TextSample::make("e", "   ", Label::ai)), DataError);
  CHECK_THROWS_AS(make_function_detector("", [](const TextSample&) { return 0.5; }), ConfigError);
  CHECK_THROWS_AS(make_function_detector("t", [](const TextSample&) { return 0.5; }, 1.5),
                  ConfigError);
}

TEST_CASE("perplexity detector separates machine from human text") {
  const auto& f = fixture();
  const auto det = PerplexityDetector::calibrate("ppl", token_lists(f.train, Label::human),
                                                 token_lists(f.train, Label::ai), f.lm);
  CHECK(det->scale() > 0.0);
  std::size_t ordered = 0;
  for (std::size_t i = 0; i < 100; ++i)
    ordered += det->ai_probability(f.eval[i].ai.tokens) > det->ai_probability(f.eval[i].human.tokens);
  CHECK(ordered >= 90);

  std::vector<double> human, ai;
  for (const auto& p : f.eval) {
    human.push_back(det->score(p.human).ai_probability);
    ai.push_back(det->score(p.ai).ai_probability);
  }
  CHECK(auroc(human, ai) >= 0.90);
}

TEST_CASE("perplexity detector logistic mapping") {
  const auto lm = std::make_shared<NgramModel>(NgramModel::fit(std::vector<Tokens>{tokenize("a b c d e f g h i")}, 1, 1e9));
  // Every text has perplexity 10 under this model.
  const auto at_tau = PerplexityDetector({"p", DetectorKind::perplexity}, lm, 10.0, 2.0);
  CHECK(std::abs(at_tau.ai_probability(tokenize("a b c")) - 0.5) < 1e-6);
  const auto below = PerplexityDetector({"p", DetectorKind::perplexity}, lm, 14.0, 2.0);
  CHECK(std::abs(below.ai_probability(tokenize("a b")) - 1.0 / (1.0 + std::exp(-2.0))) < 1e-6);
  const auto tiny = PerplexityDetector({"p", DetectorKind::perplexity}, lm, -1e6, 1.0);
  CHECK(tiny.ai_probability(tokenize("a")) < 1e-12);
  CHECK_THROWS(PerplexityDetector({"p", DetectorKind::perplexity}, lm, 10.0, 0.0));

  const std::vector<Tokens> same{tokenize("a b"), tokenize("c d")};
  CHECK_THROWS_AS(PerplexityDetector::calibrate("p", same, same, lm), DataError);
  CHECK_THROWS_AS(PerplexityDetector::calibrate("p", std::vector<Tokens>{}, same, lm), DataError);
}

TEST_CASE("stylometric features") {
  const auto fw = std::vector<std::string>{"the", "of"};
  const auto f = stylometric_features(tokenize("the cat of the hat . a dog ."), fw);
  REQUIRE(f.size() == 5);
  // Punctuation is not a word: 7 words, 6 types, 18 letters.
  CHECK(std::abs(f[0] - 6.0 / 7.0) < 1e-12);
  CHECK(std::abs(f[1] - 18.0 / 7.0) < 1e-12);
  CHECK(f[2] > 0.0);
  CHECK(std::abs(f[3] - 2.0 / 7.0) < 1e-12);
  CHECK(std::abs(f[4] - 1.0 / 7.0) < 1e-12);
}

TEST_CASE("stylometric detector learns a separable toy problem") {
  std::vector<Tokens> human, ai;
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    Tokens h, a;
    for (int k = 0; k < 30; ++k) {
      h.push_back(k % 3 == 0 ? "the" : "w" + std::to_string(rng.between(0, 50)));
      a.push_back(k % 3 == 0 ? "of" : "w" + std::to_string(rng.between(0, 50)));
    }
    human.push_back(h);
    ai.push_back(a);
  }
  const auto det = StylometricDetector::train("style", human, ai);
  for (const auto& t : human) CHECK(det->ai_probability(t) < 0.5);
  for (const auto& t : ai) CHECK(det->ai_probability(t) > 0.5);

  const auto again = StylometricDetector::train("style", human, ai);
  CHECK(again->model().weights == det->model().weights);
  CHECK(again->model().bias == det->model().bias);

  std::vector<Tokens> few(human.begin(), human.begin() + 19);
  CHECK_THROWS_AS(StylometricDetector::train("s", few, ai), DataError);
}

TEST_CASE("stylometric detector at chance on shuffled labels") {
  const auto& f = fixture();
  std::vector<Tokens> pool = token_lists(f.train, Label::ai);
  const auto human = token_lists(f.train, Label::human);
  pool.insert(pool.end(), human.begin(), human.end());
  Rng rng(11);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.between(0, i - 1)]);
  const std::size_t half = pool.size() / 2;
  const std::vector<Tokens> a(pool.begin(), pool.begin() + half / 2);
  const std::vector<Tokens> b(pool.begin() + half / 2, pool.begin() + half);
  const auto det = StylometricDetector::train("s", a, b);

  std::vector<Tokens> rest(pool.begin() + half, pool.end());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < rest.size(); ++i)
    (i % 2 ? x : y).push_back(det->ai_probability(rest[i]));
  CHECK(std::abs(auroc(x, y) - 0.5) <= 0.1);
}

TEST_CASE("stylometric detector separates the synthetic corpus") {
  const auto& f = fixture();
  const auto det = StylometricDetector::train("style", token_lists(f.train, Label::human),
                                              token_lists(f.train, Label::ai));
  std::vector<double> human, ai;
  for (const auto& p : f.eval) {
    human.push_back(det->score(p.human).ai_probability);
    ai.push_back(det->score(p.ai).ai_probability);
  }
  CHECK(auroc(human, ai) >= 0.8);
}

TEST_CASE("detectors round-trip through json") {
  const auto& f = fixture();
  const auto ppl = PerplexityDetector::calibrate("ppl", token_lists(f.train, Label::human),
                                                 token_lists(f.train, Label::ai), f.lm, 0.4);
  const auto style = StylometricDetector::train("style", token_lists(f.train, Label::human),
                                                token_lists(f.train, Label::ai));
  const auto ppl2 = detector_from_json(nlohmann::json::parse(detector_to_json(*ppl).dump()));
  const auto style2 = detector_from_json(nlohmann::json::parse(detector_to_json(*style).dump()));
  CHECK(ppl2->descriptor().threshold == 0.4);
  CHECK(ppl2->id() == "ppl");
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(ppl2->score(f.eval[i].ai).ai_probability == ppl->score(f.eval[i].ai).ai_probability);
    CHECK(style2->score(f.eval[i].human).ai_probability ==
          style->score(f.eval[i].human).ai_probability);
  }
  CHECK_THROWS(detector_from_json(nlohmann::json{{"format", "other"}}));
}

TEST_CASE("registry keeps unique ids") {
  DetectorRegistry reg;
  reg.add(make_function_detector("a", [](const TextSample&) { return 0.1; }));
  reg.add(make_function_detector("b", [](const TextSample&) { return 0.9; }));
  CHECK_THROWS_AS(reg.add(make_function_detector("a", [](const TextSample&) { return 0.2; })),
                  ConfigError);
  CHECK(reg.contains("b"));
  CHECK_FALSE(reg.contains("c"));
  CHECK_THROWS_AS(reg.get("c"), ConfigError);
  const std::vector<std::string> ids{"b", "a"};
  const auto sel = reg.select(ids);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0]->id() == "b");
  CHECK(reg.all().size() == 2);
  const auto scores = score_all(sel, TextSample::make("t", "hello", Label::ai));
  CHECK(std::abs(reward(scores) - 0.5) < 1e-12);
  CHECK(parse_detector_kind("stylometric") == DetectorKind::stylometric);
  CHECK_THROWS_AS(parse_polarity("sideways"), ConfigError);
}
