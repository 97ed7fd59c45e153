#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evasion/corpus.hpp"
#include "evasion/detector.hpp"
#include "evasion/policy.hpp"

namespace evasion {

/// One input with its G sampled rewrites, their rewards, the group-mean
/// baseline, and advantages (reward minus baseline). Advantages are plain
/// differences; no variance normalization.
struct GroupRollout {
  TextSample input;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  double baseline = 0.0;
  std::vector<double> advantages;
};

/// Sets baseline = mean(rewards) and advantages[j] = rewards[j] - baseline.
void compute_advantages(GroupRollout& group);

struct GroupOutcome {
  std::optional<GroupRollout> group;  // empty when the group was skipped
  std::size_t dropped = 0;            // rollouts lost to detector failures
  std::string skip_reason;
};

/// Samples G rollouts (rollout j uses derive_seed(seed, {j})) and scores
/// each with reward(). Rollouts whose scoring raises DetectorUnavailable are
/// dropped and the baseline is taken over the survivors; fewer than two
/// survivors skips the group. Scoring runs on up to `workers` threads.
GroupOutcome make_group(const ParaphrasePolicy& policy, const TextSample& input,
                        std::size_t group_size, std::span<const DetectorPtr> detectors,
                        std::uint64_t seed, std::size_t workers = 1);

/// J = (1/N) sum_i (1/G_i) sum_j A_ij log pi(Y_ij | X_i), evaluated with the
/// current policy parameters and the stored (frozen) advantages.
double objective(std::span<const GroupRollout> groups, const ParaphrasePolicy& policy);

/// Analytic gradient of objective() with respect to the policy parameters.
std::vector<double> objective_gradient(std::span<const GroupRollout> groups,
                                       const ParaphrasePolicy& policy);

struct TrainConfig {
  std::size_t group_size = 8;
  double learning_rate = 0.1;
  double beta = 0.001;
  std::size_t batch_size = 8;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> detector_ids;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::size_t workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
  std::size_t dropped = 0;
  std::size_t skipped_groups = 0;
  double seconds = 0.0;
};

/// theta += lr * grad(J - beta * KL(theta || theta_ref)). Parameters whose
/// gradient is exactly zero are left untouched, so a degenerate batch leaves
/// the policy bit-identical. Throws NumericError naming the offending
/// parameters when the gradient is not finite; the policy is then unchanged.
StepStats train_step(ParaphrasePolicy& policy, std::span<const GroupRollout> groups,
                     const TrainConfig& config, std::span<const double> kl_weights);

/// The penalized gradient train_step() ascends: grad J - beta * grad KL.
std::vector<double> penalized_gradient(std::span<const GroupRollout> groups,
                                       const ParaphrasePolicy& policy, double beta,
                                       std::span<const double> kl_weights);

struct TrainHistory {
  std::vector<StepStats> records;
  std::vector<std::string> warnings;
};

void write_history_csv(std::ostream& out, const TrainHistory& history);

struct TrainHooks {
  /// First step to run; earlier steps are assumed done (resume).
  std::size_t start_step = 0;
  /// Called after step s completes when (s + 1) % checkpoint_every == 0.
  std::function<void(std::size_t completed_steps, const ParaphrasePolicy&)> on_checkpoint;
  std::function<void(const StepStats&)> on_step;
};

/// Runs config.steps GRPO steps over batches of `inputs`. Batches walk a
/// seed-determined permutation of the inputs per epoch, and every random
/// draw is derived from (seed, step), so a resumed run replays exactly.
/// Throws when every step of a full epoch was skipped.
TrainHistory train(ParaphrasePolicy& policy, std::span<const TextSample> inputs,
                   std::span<const DetectorPtr> detectors, const TrainConfig& config,
                   const TrainHooks& hooks = {});

/// Checkpoint file: policy payload, training config, completed step count.
struct Checkpoint {
  nlohmann::json policy;
  TrainConfig config;
  std::size_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const SubstitutionPolicy& policy,
                     const TrainConfig& config, std::size_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace evasion
