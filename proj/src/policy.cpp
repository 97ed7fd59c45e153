#include "evasion/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "evasion/errors.hpp"
#include "evasion/remote.hpp"
#include "evasion/rng.hpp"

namespace evasion {

namespace {

constexpr std::string_view kPolicyFormat = "evasion-substitution-policy v1";

void log_softmax(std::span<const double> logits, std::vector<double>& out) {
  out.resize(logits.size());
  double best = -std::numeric_limits<double>::infinity();
  for (double l : logits) best = std::max(best, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - best);
  const double lse = best + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

}  // namespace

SynonymTable::SynonymTable(std::map<std::string, std::vector<std::string>> entries) {
  for (auto& [word, cands] : entries) {
    if (word.empty()) throw DataError("synonym table has an empty word");
    if (cands.empty()) throw DataError("synonym table: '" + word + "' has no candidates");
    std::set<std::string> seen;
    for (const auto& c : cands) {
      if (c.empty() || tokenize(c).size() != 1 || tokenize(c).front() != c)
        throw DataError("synonym table: candidate '" + c + "' for '" + word +
                        "' is not a single normalized token");
      if (!seen.insert(c).second)
        throw DataError("synonym table: duplicate candidate '" + c + "' for '" + word + "'");
    }
    auto id = std::find(cands.begin(), cands.end(), word);
    if (id == cands.end())
      throw DataError("synonym table: candidates for '" + word + "' must include the word");
    index_.emplace(word, words_.size());
    identity_.push_back(static_cast<std::size_t>(id - cands.begin()));
    words_.push_back(word);
    candidates_.push_back(std::move(cands));
  }
}

SynonymTable SynonymTable::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("synonym table must be a JSON object");
  std::map<std::string, std::vector<std::string>> entries;
  for (const auto& [word, list] : j.items()) {
    if (!list.is_array()) throw DataError("synonym table: '" + word + "' must map to a list");
    auto& out = entries[word];
    for (const auto& c : list) {
      if (!c.is_string()) throw DataError("synonym table: non-string candidate for " + word);
      out.push_back(c.get<std::string>());
    }
  }
  return SynonymTable(std::move(entries));
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synonym table " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_json(nlohmann::json::parse(content));
  } catch (const nlohmann::json::parse_error&) {
    // Fall through to JSONL.
  }
  nlohmann::json merged = nlohmann::json::object();
  std::istringstream lines(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw DataError("not an object");
      for (const auto& [k, v] : obj.items()) {
        if (merged.contains(k)) throw DataError("duplicate word '" + k + "'");
        merged[k] = v;
      }
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return from_json(merged);
}

nlohmann::json SynonymTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < words_.size(); ++i) j[words_[i]] = candidates_[i];
  return j;
}

void SynonymTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write synonym table " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string SynonymTable::hash() const { return sha256_hex(to_json().dump()); }

std::optional<std::size_t> SynonymTable::find(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "uniform") return InitMode::uniform;
  if (text == "identity_biased") return InitMode::identity_biased;
  throw ConfigError("unknown init mode '" + std::string(text) + "'");
}

SubstitutionPolicy::SubstitutionPolicy(std::shared_ptr<const SynonymTable> table,
                                       std::vector<double> logits,
                                       std::vector<double> reference_logits)
    : table_(std::move(table)), logits_(std::move(logits)), reference_(std::move(reference_logits)) {
  if (!table_ || table_->empty()) throw ConfigError("policy needs a nonempty synonym table");
  offsets_.reserve(table_->size() + 1);
  std::size_t total = 0;
  for (std::size_t e = 0; e < table_->size(); ++e) {
    offsets_.push_back(total);
    total += table_->candidates(e).size();
  }
  offsets_.push_back(total);
  if (logits_.size() != total || reference_.size() != total)
    throw DataError("policy logits do not match the synonym table (" +
                    std::to_string(logits_.size()) + " vs " + std::to_string(total) + ")");
}

SubstitutionPolicy init_policy(std::shared_ptr<const SynonymTable> table, InitMode mode,
                               double identity_prob) {
  if (!table || table->empty()) throw ConfigError("policy needs a nonempty synonym table");
  if (mode == InitMode::identity_biased && !(identity_prob > 0.0 && identity_prob < 1.0))
    throw ConfigError("identity_prob must be in (0, 1)");
  std::vector<double> logits;
  for (std::size_t e = 0; e < table->size(); ++e) {
    const std::size_t n = table->candidates(e).size();
    for (std::size_t j = 0; j < n; ++j) {
      double l = 0.0;
      if (mode == InitMode::identity_biased && n > 1) {
        l = j == table->identity_index(e)
                ? std::log(identity_prob)
                : std::log((1.0 - identity_prob) / static_cast<double>(n - 1));
      }
      logits.push_back(l);
    }
  }
  auto reference = logits;
  return SubstitutionPolicy(std::move(table), std::move(logits), std::move(reference));
}

std::span<const double> SubstitutionPolicy::logits(std::size_t entry) const {
  return std::span<const double>(logits_).subspan(offsets_[entry],
                                                  offsets_[entry + 1] - offsets_[entry]);
}

std::vector<double> SubstitutionPolicy::probabilities(std::size_t entry) const {
  std::vector<double> lp;
  log_softmax(logits(entry), lp);
  for (auto& v : lp) v = std::exp(v);
  return lp;
}

std::vector<std::size_t> SubstitutionPolicy::slots_of(std::span<const std::string> input) const {
  std::vector<std::size_t> slots;
  for (const auto& t : input)
    if (auto e = table_->find(t)) slots.push_back(*e);
  return slots;
}

Rollout SubstitutionPolicy::sample(std::span<const std::string> input, std::uint64_t seed,
                                   std::string sample_id) const {
  Rollout r;
  r.sample_id = std::move(sample_id);
  r.input_tokens.assign(input.begin(), input.end());
  r.output_tokens.reserve(input.size());
  Rng rng(seed);
  std::vector<double> lp;
  std::vector<double> probs;
  for (const auto& t : input) {
    const auto e = table_->find(t);
    if (!e) {
      r.output_tokens.push_back(t);
      continue;
    }
    log_softmax(logits(*e), lp);
    probs.resize(lp.size());
    for (std::size_t j = 0; j < lp.size(); ++j) probs[j] = std::exp(lp[j]);
    const std::size_t a = lp.size() == 1 ? 0 : rng.categorical(probs);
    r.slots.push_back(*e);
    r.actions.push_back(a);
    r.log_prob += lp[a];
    r.output_tokens.push_back(table_->candidates(*e)[a]);
  }
  return r;
}

double SubstitutionPolicy::log_prob(std::span<const std::string> input,
                                    std::span<const std::size_t> actions) const {
  const auto slots = slots_of(input);
  if (slots.size() != actions.size())
    throw DataError("action count " + std::to_string(actions.size()) + " does not match " +
                    std::to_string(slots.size()) + " substitutable slots");
  double total = 0.0;
  std::vector<double> lp;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto n = table_->candidates(slots[k]).size();
    if (actions[k] >= n)
      throw DataError("action " + std::to_string(actions[k]) + " out of range for '" +
                      table_->word(slots[k]) + "'");
    log_softmax(logits(slots[k]), lp);
    total += lp[actions[k]];
  }
  return total;
}

double SubstitutionPolicy::log_prob(const Rollout& rollout) const {
  if (rollout.slots.size() != rollout.actions.size())
    throw DataError("rollout slots and actions differ in length");
  double total = 0.0;
  std::vector<double> lp;
  for (std::size_t k = 0; k < rollout.slots.size(); ++k) {
    log_softmax(logits(rollout.slots[k]), lp);
    if (rollout.actions[k] >= lp.size()) throw DataError("rollout action out of range");
    total += lp[rollout.actions[k]];
  }
  return total;
}

void SubstitutionPolicy::accumulate_grad_log_prob(const Rollout& rollout, double weight,
                                                  std::span<double> grad) const {
  if (grad.size() != logits_.size()) throw DataError("gradient buffer has the wrong size");
  std::vector<double> lp;
  for (std::size_t k = 0; k < rollout.slots.size(); ++k) {
    const std::size_t e = rollout.slots[k];
    log_softmax(logits(e), lp);
    const std::size_t base = offsets_[e];
    for (std::size_t j = 0; j < lp.size(); ++j)
      grad[base + j] += weight * ((j == rollout.actions[k] ? 1.0 : 0.0) - std::exp(lp[j]));
  }
}

std::vector<double> SubstitutionPolicy::grad_log_prob(const Rollout& rollout) const {
  std::vector<double> g(logits_.size(), 0.0);
  accumulate_grad_log_prob(rollout, 1.0, g);
  return g;
}

KlTerm SubstitutionPolicy::kl_to_reference(std::span<const double> weights) const {
  if (weights.size() != table_->size())
    throw DataError("KL weights must have one entry per table word");
  KlTerm kl;
  kl.gradient.assign(logits_.size(), 0.0);
  std::vector<double> lp, lq;
  for (std::size_t e = 0; e < table_->size(); ++e) {
    const double w = weights[e];
    if (w < 0.0 || !std::isfinite(w))
      throw DataError("KL weight for '" + table_->word(e) + "' is negative or non-finite");
    if (w == 0.0) continue;
    const std::size_t base = offsets_[e];
    const std::size_t n = offsets_[e + 1] - base;
    log_softmax(logits(e), lp);
    log_softmax(std::span<const double>(reference_).subspan(base, n), lq);
    double unit = 0.0;
    for (std::size_t j = 0; j < n; ++j) unit += std::exp(lp[j]) * (lp[j] - lq[j]);
    kl.value += w * unit;
    for (std::size_t j = 0; j < n; ++j)
      kl.gradient[base + j] = w * std::exp(lp[j]) * (lp[j] - lq[j] - unit);
  }
  return kl;
}

std::vector<double> SubstitutionPolicy::occurrence_weights(std::span<const Tokens> corpus) const {
  std::vector<double> w(table_->size(), 0.0);
  if (corpus.empty()) return w;
  for (const auto& text : corpus)
    for (const auto& t : text)
      if (auto e = table_->find(t)) w[*e] += 1.0;
  for (auto& v : w) v /= static_cast<double>(corpus.size());
  return w;
}

std::string SubstitutionPolicy::parameter_name(std::size_t index) const {
  if (index >= logits_.size()) return "#" + std::to_string(index);
  const auto e = static_cast<std::size_t>(
      std::upper_bound(offsets_.begin(), offsets_.end(), index) - offsets_.begin() - 1);
  return table_->word(e) + "->" + table_->candidates(e)[index - offsets_[e]];
}

std::unique_ptr<ParaphrasePolicy> SubstitutionPolicy::clone() const {
  return std::make_unique<SubstitutionPolicy>(*this);
}

Rollout paraphrase_best_of(const ParaphrasePolicy& policy, std::span<const std::string> input,
                           std::size_t group_size, std::span<const DetectorPtr> detectors,
                           std::uint64_t seed) {
  if (group_size == 0) throw ConfigError("best-of group size must be at least 1");
  if (detectors.empty()) throw ConfigError("best-of selection needs at least one detector");
  std::optional<Rollout> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < group_size; ++j) {
    Rollout r = policy.sample(input, j == 0 ? seed : derive_seed(seed, {j}));
    const auto text = TextSample::from_tokens("candidate", r.output_tokens, Label::paraphrased);
    const auto scores = score_all(detectors, text);
    const double mean_ai = 1.0 - reward(scores);
    if (mean_ai < best_score) {
      best_score = mean_ai;
      best = std::move(r);
    }
  }
  return std::move(*best);
}

nlohmann::json policy_to_json(const SubstitutionPolicy& policy) {
  nlohmann::json j;
  j["format"] = kPolicyFormat;
  j["table_hash"] = policy.table().hash();
  j["logits"] = std::vector<double>(policy.parameters().begin(), policy.parameters().end());
  j["reference_logits"] =
      std::vector<double>(policy.reference_logits().begin(), policy.reference_logits().end());
  return j;
}

SubstitutionPolicy policy_from_json(const nlohmann::json& j,
                                    std::shared_ptr<const SynonymTable> table) {
  try {
    if (j.at("format").get<std::string>() != kPolicyFormat)
      throw DataError("unsupported policy format");
    const auto stored = j.at("table_hash").get<std::string>();
    if (stored != table->hash())
      throw DataError("policy checkpoint was trained on a different synonym table (hash " +
                      stored.substr(0, 12) + " vs " + table->hash().substr(0, 12) + ")");
    return SubstitutionPolicy(std::move(table), j.at("logits").get<std::vector<double>>(),
                              j.at("reference_logits").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed policy checkpoint: ") + e.what());
  }
}

}  // namespace evasion
