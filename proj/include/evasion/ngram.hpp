#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evasion/corpus.hpp"

namespace evasion {

/// Additive-smoothed n-gram language model.
///
///   p(w | h) = (c(h, w) + alpha) / (c(h) + alpha * |V|)
///
/// where |V| counts every training token plus the reserved unknown token.
/// Contexts are padded on the left with a start symbol that is never
/// predicted, so every position of every text is scored. Immutable after
/// fit(); all queries are thread-safe.
class NgramModel {
 public:
  static constexpr int kMaxOrder = 4;
  static constexpr std::string_view kUnknown = "<unk>";
  static constexpr std::string_view kStart = "<s>";

  NgramModel() = default;

  static NgramModel fit(std::span<const Tokens> texts, int order = 3, double alpha = 0.1);

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  /// Size of the predicted vocabulary, unknown token included.
  std::size_t vocab_size() const noexcept { return words_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return words_; }
  bool contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

  /// Smoothed p(next | context); only the last order-1 context tokens are
  /// used and missing positions are start-padded.
  double conditional(std::span<const std::string> context, std::string_view next) const;

  /// Sum of log conditionals over all positions. Throws on empty input.
  double log_prob(std::span<const std::string> tokens) const;

  /// exp(-log_prob / T). Throws on empty input.
  double perplexity(std::span<const std::string> tokens) const;

  /// Autoregressive sample from temperature-scaled conditionals. The
  /// unknown token is never emitted.
  Tokens sample(std::size_t length, double temperature, std::uint64_t seed) const;

  void save(std::ostream& out) const;
  static NgramModel load(std::istream& in);

  friend bool operator==(const NgramModel&, const NgramModel&) = default;

 private:
  using Id = std::uint32_t;
  using Key = std::uint64_t;

  struct ContextCounts {
    std::uint64_t total = 0;
    std::vector<std::pair<Id, std::uint32_t>> next;  // sorted by id
    friend bool operator==(const ContextCounts&, const ContextCounts&) = default;
  };

  Id id_of(std::string_view word) const;
  Id start_id() const noexcept { return static_cast<Id>(words_.size()); }
  Key pack(std::span<const Id> context) const noexcept;
  double conditional_ids(Key key, Id next) const;
  std::vector<Id> encode(std::span<const std::string> tokens) const;
  void rebuild_index();

  int order_ = 0;
  double alpha_ = 0.0;
  std::vector<std::string> words_;  // id -> word; id 0 is the unknown token
  std::unordered_map<std::string, Id> ids_;
  std::unordered_map<Key, ContextCounts> contexts_;
};

}  // namespace evasion
