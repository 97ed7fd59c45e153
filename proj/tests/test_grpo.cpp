#include <atomic>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "evasion/errors.hpp"
#include "evasion/grpo.hpp"
#include "helpers.hpp"

using namespace evasion;

namespace {

struct Setup {
  std::shared_ptr<const SynonymTable> table;
  std::vector<TextSample> inputs;
  DetectorPtr machine_share;

  Setup() {
    const auto params = testing::default_params();
    table = std::make_shared<SynonymTable>(synonym_entries(params.vocab));
    for (const auto& p : synth_corpus(7, 24, params)) inputs.push_back(p.ai);
    std::set<std::string> machine;
    for (std::size_t e = 0; e < table->size(); ++e) machine.insert(table->word(e));
    // ai-probability rises with the share of machine-vocabulary words.
    machine_share = make_function_detector("share", [machine](const TextSample& t) {
      double m = 0;
      for (const auto& w : t.tokens) m += machine.count(w);
      return std::min(1.0, 5.0 * m / static_cast<double>(t.tokens.size()));
    });
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.group_size = 4;
  c.batch_size = 4;
  c.steps = 12;
  c.learning_rate = 1.0;
  c.seed = 5;
  c.detector_ids = {"share"};
  return c;
}

std::vector<double> params_of(const ParaphrasePolicy& p) {
  return {p.parameters().begin(), p.parameters().end()};
}

std::vector<GroupRollout> sample_groups(const SubstitutionPolicy& p, std::uint64_t seed) {
  const auto& s = setup();
  const std::vector<DetectorPtr> dets{s.machine_share};
  std::vector<GroupRollout> groups;
  for (std::size_t i = 0; i < 3; ++i) {
    auto out = make_group(p, s.inputs[i], 5, dets, derive_seed(seed, {i}));
    REQUIRE(out.group);
    groups.push_back(*out.group);
  }
  return groups;
}

}  // namespace

TEST_CASE("advantages subtract the group mean") {
  GroupRollout g;
  g.rewards = {0.2, 0.4, 0.6};
  compute_advantages(g);
  CHECK(std::abs(g.baseline - 0.4) < 1e-12);
  CHECK(std::abs(g.advantages[0] + 0.2) < 1e-12);
  CHECK(std::abs(g.advantages[1]) < 1e-12);
  CHECK(std::abs(g.advantages[2] - 0.2) < 1e-12);
  GroupRollout empty;
  CHECK_THROWS_AS(compute_advantages(empty), DataError);
}

TEST_CASE("advantages sum to zero and ignore reward shifts") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    GroupRollout g;
    const auto n = rng.between(2, 16);
    for (std::uint64_t k = 0; k < n; ++k) g.rewards.push_back(rng.uniform());
    compute_advantages(g);
    double sum = 0.0;
    for (double a : g.advantages) sum += a;
    CHECK(std::abs(sum) <= 1e-9);

    GroupRollout shifted = g;
    const double c = 10.0 * rng.uniform() - 5.0;
    for (auto& r : shifted.rewards) r += c;
    compute_advantages(shifted);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(shifted.advantages[k] - g.advantages[k]) < 1e-9);
  }
}

TEST_CASE("objective matches a manual sum") {
  auto p = init_policy(setup().table);
  const auto groups = sample_groups(p, 1);
  double expected = 0.0;
  for (const auto& g : groups) {
    double inner = 0.0;
    for (std::size_t j = 0; j < g.rollouts.size(); ++j) inner += g.advantages[j] * p.log_prob(g.rollouts[j]);
    expected += inner / static_cast<double>(g.rollouts.size());
  }
  expected /= static_cast<double>(groups.size());
  CHECK(std::abs(objective(groups, p) - expected) < 1e-12);
  CHECK_THROWS_AS(objective(std::vector<GroupRollout>{}, p), DataError);
}

TEST_CASE("penalized gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = init_policy(setup().table);
    Rng rng(seed);
    for (auto& v : p.mutable_parameters()) v = 2.0 * rng.uniform() - 1.0;
    const auto groups = sample_groups(p, seed);
    const auto w = p.occurrence_weights(std::vector<Tokens>{setup().inputs[0].tokens});
    const double beta = 0.05;
    auto f = [&] { return objective(groups, p) - beta * p.kl_to_reference(w).value; };
    const auto g = penalized_gradient(groups, p, beta, w);
    auto params = p.mutable_parameters();
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i], h = 1e-5;
      params[i] = keep + h;
      const double up = f();
      params[i] = keep - h;
      const double down = f();
      params[i] = keep;
      const double fd = (up - down) / (2 * h);
      diff += (fd - g[i]) * (fd - g[i]);
      norm += g[i] * g[i];
    }
    CHECK(std::sqrt(diff) <= 1e-5 * std::max(std::sqrt(norm), 1e-12));
    const auto obj_g = objective_gradient(groups, p);
    CHECK(obj_g.size() == g.size());
  }
}

TEST_CASE("a small step ascends the penalized objective") {
  auto p = init_policy(setup().table);
  const auto groups = sample_groups(p, 3);
  const auto w = p.occurrence_weights(std::vector<Tokens>{setup().inputs[0].tokens});
  TrainConfig c = small_config();
  c.learning_rate = 1e-3;
  c.beta = 0.01;
  auto f = [&] { return objective(groups, p) - c.beta * p.kl_to_reference(w).value; };
  const double before = f();
  train_step(p, groups, c, w);
  CHECK(f() > before);

  auto q = init_policy(setup().table);
  const auto fresh = sample_groups(q, 13);
  c.beta = 0.0;
  const double j0 = objective(fresh, q);
  train_step(q, fresh, c, w);
  CHECK(objective(fresh, q) > j0);
}

TEST_CASE("a degenerate group leaves the policy bit-identical") {
  auto p = init_policy(setup().table);
  auto groups = sample_groups(p, 4);
  for (auto& g : groups) {
    std::fill(g.rewards.begin(), g.rewards.end(), 0.37);
    compute_advantages(g);
  }
  const auto before = params_of(p);
  const auto w = p.occurrence_weights(std::vector<Tokens>{setup().inputs[0].tokens});
  train_step(p, groups, small_config(), w);
  CHECK(params_of(p) == before);

  // Same through the trainer with a constant detector.
  const std::vector<DetectorPtr> constant{make_function_detector("share", [](const TextSample&) { return 0.8; })};
  train(p, setup().inputs, constant, small_config());
  CHECK(params_of(p) == before);
}

TEST_CASE("non-finite gradients raise NumericError and leave the policy unchanged") {
  auto p = init_policy(setup().table);
  auto groups = sample_groups(p, 6);
  groups[0].advantages[0] = std::nan("");
  const auto before = params_of(p);
  const auto w = p.occurrence_weights(std::vector<Tokens>{setup().inputs[0].tokens});
  CHECK_THROWS_AS(train_step(p, groups, small_config(), w), NumericError);
  CHECK(params_of(p) == before);
}

TEST_CASE("training raises the reward and is deterministic") {
  const std::vector<DetectorPtr> dets{setup().machine_share};
  auto a = init_policy(setup().table);
  auto b = init_policy(setup().table);
  auto c = small_config();
  c.steps = 30;
  c.learning_rate = 10.0;
  const auto ha = train(a, setup().inputs, dets, c);
  const auto hb = train(b, setup().inputs, dets, c);
  CHECK(params_of(a) == params_of(b));
  REQUIRE(ha.records.size() == 30);
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    early += ha.records[i].mean_reward;
    late += ha.records[25 + i].mean_reward;
  }
  CHECK(late > early);
  CHECK(ha.records.back().mean_kl > 0.0);

  auto threaded = init_policy(setup().table);
  c.workers = 3;
  train(threaded, setup().inputs, dets, c);
  CHECK(params_of(threaded) == params_of(a));
}

TEST_CASE("a larger KL penalty keeps the policy closer to the reference") {
  const std::vector<DetectorPtr> dets{setup().machine_share};
  auto final_kl = [&](double beta) {
    auto p = init_policy(setup().table);
    auto c = small_config();
    c.steps = 40;
    c.learning_rate = 10.0;
    c.beta = beta;
    return train(p, setup().inputs, dets, c).records.back().mean_kl;
  };
  CHECK(final_kl(0.01) <= final_kl(0.0001));
}

TEST_CASE("failing rollouts are dropped and empty groups skipped") {
  const auto p = init_policy(setup().table);
  std::atomic<int> calls{0};
  const std::vector<DetectorPtr> flaky{make_function_detector("share", [&](const TextSample&) -> double {
    if (calls++ % 3 == 0) throw DetectorUnavailable("share", "flaky");
    return 0.5;
  })};
  const auto out = make_group(p, setup().inputs[0], 6, flaky, 1);
  REQUIRE(out.group);
  CHECK(out.dropped == 2);
  CHECK(out.group->rollouts.size() == 4);
  CHECK(out.group->baseline == 0.5);

  const std::vector<DetectorPtr> dead{make_function_detector("share", [](const TextSample&) -> double {
    throw DetectorUnavailable("share", "down");
  })};
  const auto skipped = make_group(p, setup().inputs[0], 6, dead, 1);
  CHECK_FALSE(skipped.group);
  CHECK(skipped.dropped == 6);
  CHECK_FALSE(skipped.skip_reason.empty());

  auto q = init_policy(setup().table);
  CHECK_THROWS_AS(train(q, setup().inputs, dead, small_config()), DetectorUnavailable);
  CHECK_THROWS_AS(make_group(p, setup().inputs[0], 1, flaky, 1), ConfigError);
}

TEST_CASE("config validation and json") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  const auto back = TrainConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());
  c.group_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.beta = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.detector_ids.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoints round-trip and resuming replays the same run") {
  testing::TempDir dir("grpo_ckpt");
  const std::vector<DetectorPtr> dets{setup().machine_share};
  auto c = small_config();
  c.steps = 10;
  c.checkpoint_every = 4;

  auto straight = init_policy(setup().table);
  std::vector<std::size_t> marks;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t done, const ParaphrasePolicy& p) {
    marks.push_back(done);
    save_checkpoint(dir / ("ck" + std::to_string(done) + ".json"),
                    dynamic_cast<const SubstitutionPolicy&>(p), c, done);
  };
  const auto history = train(straight, setup().inputs, dets, c, hooks);
  CHECK(marks == std::vector<std::size_t>{4, 8});

  const auto ck = load_checkpoint(dir / "ck4.json");
  CHECK(ck.step == 4);
  CHECK(ck.config.to_json() == c.to_json());
  auto resumed = policy_from_json(ck.policy, setup().table);
  TrainHooks from4;
  from4.start_step = 4;
  const auto rest = train(resumed, setup().inputs, dets, c, from4);
  CHECK(rest.records.size() == 6);
  CHECK(params_of(resumed) == params_of(straight));

  std::ostringstream csv;
  write_history_csv(csv, history);
  const auto text = csv.str();
  CHECK(text.rfind("step,mean_reward,mean_kl,objective,dropped,seconds\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), DataError);
  { std::ofstream(dir / "bad.json") << "{\"format\": \"nope\"}"; }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), DataError);
}
