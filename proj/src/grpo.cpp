#include "evasion/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <ostream>

#include "evasion/errors.hpp"
#include "evasion/rng.hpp"

namespace evasion {

void compute_advantages(GroupRollout& group) {
  if (group.rewards.empty()) throw DataError("group has no rewards");
  double sum = 0.0;
  for (double r : group.rewards) sum += r;
  group.baseline = sum / static_cast<double>(group.rewards.size());
  group.advantages.resize(group.rewards.size());
  for (std::size_t j = 0; j < group.rewards.size(); ++j)
    group.advantages[j] = group.rewards[j] - group.baseline;
}

GroupOutcome make_group(const ParaphrasePolicy& policy, const TextSample& input,
                        std::size_t group_size, std::span<const DetectorPtr> detectors,
                        std::uint64_t seed, std::size_t workers) {
  if (group_size < 2) throw ConfigError("GRPO group size must be at least 2");
  if (detectors.empty()) throw ConfigError("GRPO needs at least one reward detector");

  struct Scored {
    Rollout rollout;
    std::optional<double> reward;
  };
  auto run_one = [&](std::size_t j) {
    Scored s;
    s.rollout = policy.sample(input.tokens, derive_seed(seed, {j}),
                              input.id + "#" + std::to_string(j));
    const auto text =
        TextSample::from_tokens(s.rollout.sample_id, s.rollout.output_tokens, Label::paraphrased);
    try {
      const auto scores = score_all(detectors, text);
      s.reward = reward(scores);
    } catch (const DetectorUnavailable&) {
      s.reward.reset();
    }
    return s;
  };

  std::vector<Scored> scored(group_size);
  if (workers <= 1) {
    for (std::size_t j = 0; j < group_size; ++j) scored[j] = run_one(j);
  } else {
    for (std::size_t start = 0; start < group_size; start += workers) {
      const std::size_t end = std::min(group_size, start + workers);
      std::vector<std::future<Scored>> pending;
      for (std::size_t j = start; j < end; ++j)
        pending.push_back(std::async(std::launch::async, run_one, j));
      for (std::size_t j = start; j < end; ++j) scored[j] = pending[j - start].get();
    }
  }

  GroupOutcome out;
  GroupRollout group;
  group.input = input;
  for (auto& s : scored) {
    if (!s.reward) {
      ++out.dropped;
      continue;
    }
    group.rollouts.push_back(std::move(s.rollout));
    group.rewards.push_back(*s.reward);
  }
  if (group.rollouts.size() < 2) {
    out.skip_reason = "group for '" + input.id + "' kept " +
                      std::to_string(group.rollouts.size()) + " of " +
                      std::to_string(group_size) + " rollouts";
    return out;
  }
  compute_advantages(group);
  out.group = std::move(group);
  return out;
}

double objective(std::span<const GroupRollout> groups, const ParaphrasePolicy& policy) {
  if (groups.empty()) throw DataError("objective needs at least one group");
  double total = 0.0;
  for (const auto& g : groups) {
    double inner = 0.0;
    for (std::size_t j = 0; j < g.rollouts.size(); ++j)
      if (g.advantages[j] != 0.0) inner += g.advantages[j] * policy.log_prob(g.rollouts[j]);
    total += inner / static_cast<double>(g.rollouts.size());
  }
  return total / static_cast<double>(groups.size());
}

std::vector<double> objective_gradient(std::span<const GroupRollout> groups,
                                       const ParaphrasePolicy& policy) {
  std::vector<double> grad(policy.parameters().size(), 0.0);
  if (groups.empty()) return grad;
  const double n = static_cast<double>(groups.size());
  for (const auto& g : groups) {
    const double scale = 1.0 / (n * static_cast<double>(g.rollouts.size()));
    for (std::size_t j = 0; j < g.rollouts.size(); ++j)
      if (g.advantages[j] != 0.0)
        policy.accumulate_grad_log_prob(g.rollouts[j], scale * g.advantages[j], grad);
  }
  return grad;
}

std::vector<double> penalized_gradient(std::span<const GroupRollout> groups,
                                       const ParaphrasePolicy& policy, double beta,
                                       std::span<const double> kl_weights) {
  auto grad = objective_gradient(groups, policy);
  if (beta != 0.0) {
    const auto kl = policy.kl_to_reference(kl_weights);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= beta * kl.gradient[i];
  }
  return grad;
}

void TrainConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (detector_ids.empty()) throw ConfigError("at least one reward detector is required");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"group_size", group_size}, {"learning_rate", learning_rate},
          {"beta", beta},             {"batch_size", batch_size},
          {"steps", steps},           {"seed", seed},
          {"detectors", detector_ids}, {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.group_size = j.value("group_size", c.group_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta = j.value("beta", c.beta);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.detector_ids = j.value("detectors", c.detector_ids);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

StepStats train_step(ParaphrasePolicy& policy, std::span<const GroupRollout> groups,
                     const TrainConfig& config, std::span<const double> kl_weights) {
  StepStats stats;
  const auto kl = policy.kl_to_reference(kl_weights);
  stats.mean_kl = kl.value;
  std::size_t n_rewards = 0;
  for (const auto& g : groups) {
    for (double r : g.rewards) stats.mean_reward += r;
    n_rewards += g.rewards.size();
  }
  if (n_rewards) stats.mean_reward /= static_cast<double>(n_rewards);
  if (groups.empty()) return stats;

  stats.objective = objective(groups, policy);
  auto grad = objective_gradient(groups, policy);
  if (config.beta != 0.0)
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= config.beta * kl.gradient[i];

  std::string bad;
  std::size_t n_bad = 0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      if (n_bad++ < 8) bad += (bad.empty() ? "" : ", ") + policy.parameter_name(i);
    }
  }
  if (n_bad)
    throw NumericError("non-finite gradient in " + std::to_string(n_bad) +
                       " parameter(s): " + bad);

  auto params = policy.mutable_parameters();
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (grad[i] != 0.0) params[i] += config.learning_rate * grad[i];
  return stats;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "step,mean_reward,mean_kl,objective,dropped,seconds\n";
  char line[256];
  for (const auto& r : history.records) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%zu,%.6f\n", r.step, r.mean_reward,
                  r.mean_kl, r.objective, r.dropped, r.seconds);
    out << line;
  }
}

namespace {

/// Input order for an epoch: a Fisher-Yates shuffle seeded from (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0xe90c, epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.between(0, i - 1)]);
  return order;
}

}  // namespace

TrainHistory train(ParaphrasePolicy& policy, std::span<const TextSample> inputs,
                   std::span<const DetectorPtr> detectors, const TrainConfig& config,
                   const TrainHooks& hooks) {
  config.validate();
  if (inputs.empty()) throw DataError("training corpus is empty");
  if (detectors.empty()) throw ConfigError("training needs at least one detector");

  std::vector<Tokens> corpus_tokens;
  corpus_tokens.reserve(inputs.size());
  for (const auto& s : inputs) corpus_tokens.push_back(s.tokens);
  const auto kl_weights = policy.occurrence_weights(corpus_tokens);

  const std::size_t n = inputs.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  std::map<std::size_t, std::vector<std::size_t>> orders;
  auto input_at = [&](std::size_t position) -> const TextSample& {
    const std::size_t epoch = position / n;
    auto it = orders.find(epoch);
    if (it == orders.end()) {
      orders.clear();
      it = orders.emplace(epoch, epoch_order(n, config.seed, epoch)).first;
    }
    return inputs[it->second[position % n]];
  };

  TrainHistory history;
  std::size_t consecutive_skipped = 0;
  for (std::size_t step = hooks.start_step; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<GroupRollout> groups;
    std::size_t dropped = 0, skipped = 0;
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      const auto& input = input_at(step * config.batch_size + i);
      auto outcome = make_group(policy, input, config.group_size, detectors,
                                derive_seed(config.seed, {step, i}), config.workers);
      dropped += outcome.dropped;
      if (outcome.group) {
        groups.push_back(std::move(*outcome.group));
      } else {
        ++skipped;
        history.warnings.push_back("step " + std::to_string(step) + ": " + outcome.skip_reason);
      }
    }

    StepStats stats;
    if (groups.empty()) {
      history.warnings.push_back("step " + std::to_string(step) +
                                 ": every group skipped; no update");
      stats.mean_kl = policy.kl_to_reference(kl_weights).value;
      if (++consecutive_skipped >= steps_per_epoch)
        throw DetectorUnavailable(config.detector_ids.front(),
                                  "every step of a full epoch was skipped");
    } else {
      consecutive_skipped = 0;
      stats = train_step(policy, groups, config, kl_weights);
    }
    stats.step = step;
    stats.dropped = dropped;
    stats.skipped_groups = skipped;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.records.push_back(stats);
    if (hooks.on_step) hooks.on_step(stats);
    if (config.checkpoint_every && hooks.on_checkpoint && (step + 1) % config.checkpoint_every == 0)
      hooks.on_checkpoint(step + 1, policy);
  }
  return history;
}

void save_checkpoint(const std::filesystem::path& path, const SubstitutionPolicy& policy,
                     const TrainConfig& config, std::size_t step) {
  nlohmann::json j;
  j["format"] = "evasion-checkpoint v1";
  j["policy"] = policy_to_json(policy);
  j["config"] = config.to_json();
  j["step"] = step;
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw DataError("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "evasion-checkpoint v1")
      throw DataError("unsupported checkpoint format in " + path.string());
    Checkpoint c;
    c.policy = j.at("policy");
    c.config = TrainConfig::from_json(j.at("config"));
    c.step = j.at("step").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace evasion
