#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evasion/corpus.hpp"
#include "evasion/detector.hpp"

namespace evasion {

/// Word -> ordered candidate list. Every list contains the word itself and
/// has no duplicates. Entries are kept sorted by word.
class SynonymTable {
 public:
  SynonymTable() = default;
  explicit SynonymTable(std::map<std::string, std::vector<std::string>> entries);

  /// Accepts {"word": ["word", "alt", ...], ...}.
  static SynonymTable from_json(const nlohmann::json& j);
  /// Reads a JSON map, or JSONL where each line is a one-key map.
  static SynonymTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;

  /// SHA-256 of the canonical JSON serialization.
  std::string hash() const;

  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  const std::string& word(std::size_t entry) const { return words_[entry]; }
  const std::vector<std::string>& candidates(std::size_t entry) const {
    return candidates_[entry];
  }
  std::size_t identity_index(std::size_t entry) const { return identity_[entry]; }
  std::optional<std::size_t> find(std::string_view word) const;

 private:
  std::vector<std::string> words_;
  std::vector<std::vector<std::string>> candidates_;
  std::vector<std::size_t> identity_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// One sampled paraphrase. `slots[k]` is the table entry of the k-th
/// substitutable position in the input and `actions[k]` the candidate chosen
/// there.
struct Rollout {
  std::string sample_id;
  Tokens input_tokens;
  Tokens output_tokens;
  std::vector<std::size_t> slots;
  std::vector<std::size_t> actions;
  double log_prob = 0.0;
};

struct KlTerm {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d parameters
};

/// Stable policy contract the trainer programs against: sampling,
/// log-likelihood, its gradient, and a KL penalty to the frozen reference,
/// all over a flat parameter vector.
class ParaphrasePolicy {
 public:
  virtual ~ParaphrasePolicy() = default;

  virtual Rollout sample(std::span<const std::string> input, std::uint64_t seed,
                         std::string sample_id = {}) const = 0;
  virtual double log_prob(const Rollout& rollout) const = 0;
  /// grad += weight * d log_prob(rollout) / d parameters.
  virtual void accumulate_grad_log_prob(const Rollout& rollout, double weight,
                                        std::span<double> grad) const = 0;
  /// Weighted KL(current || reference); `weights` has one entry per
  /// distribution unit (see unit_count()).
  virtual KlTerm kl_to_reference(std::span<const double> weights) const = 0;
  virtual std::size_t unit_count() const = 0;
  /// Average number of occurrences per text of each distribution unit.
  virtual std::vector<double> occurrence_weights(std::span<const Tokens> corpus) const = 0;

  virtual std::span<const double> parameters() const = 0;
  virtual std::span<double> mutable_parameters() = 0;
  /// Human-readable name of a parameter, for diagnostics.
  virtual std::string parameter_name(std::size_t index) const = 0;
  virtual std::unique_ptr<ParaphrasePolicy> clone() const = 0;
};

enum class InitMode {
  uniform,         // all logits zero
  identity_biased  // identity candidate holds `identity_prob`, the rest share the remainder
};

InitMode parse_init_mode(std::string_view text);

/// Tabular lexical-substitution policy: one independent categorical per
/// table word, parameterized by logits.
class SubstitutionPolicy final : public ParaphrasePolicy {
 public:
  SubstitutionPolicy(std::shared_ptr<const SynonymTable> table, std::vector<double> logits,
                     std::vector<double> reference_logits);

  const SynonymTable& table() const noexcept { return *table_; }
  std::shared_ptr<const SynonymTable> table_ptr() const noexcept { return table_; }
  std::span<const double> logits(std::size_t entry) const;
  std::span<const double> reference_logits() const noexcept { return reference_; }
  std::vector<double> probabilities(std::size_t entry) const;
  std::size_t offset(std::size_t entry) const noexcept { return offsets_[entry]; }

  /// Indices of table entries at each substitutable position of `input`.
  std::vector<std::size_t> slots_of(std::span<const std::string> input) const;
  /// Sum of log softmax(theta_word)[action] over slots. Throws on a length
  /// mismatch or an out-of-range action.
  double log_prob(std::span<const std::string> input, std::span<const std::size_t> actions) const;
  std::vector<double> grad_log_prob(const Rollout& rollout) const;

  Rollout sample(std::span<const std::string> input, std::uint64_t seed,
                 std::string sample_id = {}) const override;
  double log_prob(const Rollout& rollout) const override;
  void accumulate_grad_log_prob(const Rollout& rollout, double weight,
                                std::span<double> grad) const override;
  KlTerm kl_to_reference(std::span<const double> weights) const override;
  std::size_t unit_count() const override { return table_->size(); }
  std::vector<double> occurrence_weights(std::span<const Tokens> corpus) const override;

  std::span<const double> parameters() const override { return logits_; }
  std::span<double> mutable_parameters() override { return logits_; }
  std::string parameter_name(std::size_t index) const override;
  std::unique_ptr<ParaphrasePolicy> clone() const override;

 private:
  std::shared_ptr<const SynonymTable> table_;
  std::vector<std::size_t> offsets_;  // entry -> first logit index; back() == size
  std::vector<double> logits_;
  std::vector<double> reference_;
};

SubstitutionPolicy init_policy(std::shared_ptr<const SynonymTable> table,
                               InitMode mode = InitMode::uniform, double identity_prob = 0.9);

/// Samples G candidates (candidate 0 uses `seed`, candidate j uses
/// derive_seed(seed, {j})), scores each with every detector, and returns the
/// one with the lowest mean ai-probability; ties go to the lower index.
Rollout paraphrase_best_of(const ParaphrasePolicy& policy, std::span<const std::string> input,
                           std::size_t group_size, std::span<const DetectorPtr> detectors,
                           std::uint64_t seed);

/// Checkpoint payload for a substitution policy: logits, reference logits,
/// and the table hash they belong to.
nlohmann::json policy_to_json(const SubstitutionPolicy& policy);
/// Throws DataError when the stored table hash differs from `table`.
SubstitutionPolicy policy_from_json(const nlohmann::json& j,
                                    std::shared_ptr<const SynonymTable> table);

}  // namespace evasion
