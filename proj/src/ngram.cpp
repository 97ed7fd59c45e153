#include "evasion/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "evasion/errors.hpp"
#include "evasion/rng.hpp"

namespace evasion {

namespace {

constexpr int kIdBits = 21;
constexpr std::uint64_t kIdMask = (1ULL << kIdBits) - 1;
constexpr std::string_view kFormatTag = "evasion-ngram v1";

}  // namespace

NgramModel NgramModel::fit(std::span<const Tokens> texts, int order, double alpha) {
  if (order < 1 || order > kMaxOrder)
    throw ConfigError("n-gram order must be in [1, " + std::to_string(kMaxOrder) + "]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  std::size_t total_tokens = 0;
  for (const auto& t : texts) total_tokens += t.size();
  if (total_tokens == 0) throw DataError("cannot fit a language model on empty input");

  NgramModel m;
  m.order_ = order;
  m.alpha_ = alpha;
  std::set<std::string> vocab;
  for (const auto& t : texts) vocab.insert(t.begin(), t.end());
  vocab.erase(std::string(kUnknown));
  if (vocab.size() + 2 >= kIdMask) throw DataError("vocabulary too large");
  m.words_.emplace_back(kUnknown);
  m.words_.insert(m.words_.end(), vocab.begin(), vocab.end());
  m.rebuild_index();

  std::map<Key, std::map<Id, std::uint32_t>> counts;
  for (const auto& t : texts) {
    const auto ids = m.encode(t);
    std::vector<Id> context(static_cast<std::size_t>(order - 1), m.start_id());
    for (Id id : ids) {
      ++counts[m.pack(context)][id];
      if (!context.empty()) {
        std::rotate(context.begin(), context.begin() + 1, context.end());
        context.back() = id;
      }
    }
  }
  for (auto& [key, table] : counts) {
    ContextCounts cc;
    for (auto [id, c] : table) {
      cc.next.emplace_back(id, c);
      cc.total += c;
    }
    m.contexts_.emplace(key, std::move(cc));
  }
  return m;
}

void NgramModel::rebuild_index() {
  ids_.clear();
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<Id>(i));
}

NgramModel::Id NgramModel::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? 0 : it->second;
}

NgramModel::Key NgramModel::pack(std::span<const Id> context) const noexcept {
  Key key = 0;
  for (Id id : context) key = (key << kIdBits) | (static_cast<Key>(id) & kIdMask);
  return key;
}

std::vector<NgramModel::Id> NgramModel::encode(std::span<const std::string> tokens) const {
  std::vector<Id> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

double NgramModel::conditional_ids(Key key, Id next) const {
  const double v = static_cast<double>(words_.size());
  auto it = contexts_.find(key);
  if (it == contexts_.end()) return 1.0 / v;
  const auto& cc = it->second;
  auto pos = std::lower_bound(cc.next.begin(), cc.next.end(), next,
                              [](const auto& e, Id id) { return e.first < id; });
  const double c = (pos != cc.next.end() && pos->first == next) ? pos->second : 0.0;
  return (c + alpha_) / (static_cast<double>(cc.total) + alpha_ * v);
}

double NgramModel::conditional(std::span<const std::string> context, std::string_view next) const {
  if (order_ == 0) throw DataError("language model is not fitted");
  const auto need = static_cast<std::size_t>(order_ - 1);
  std::vector<Id> ctx(need, start_id());
  const std::size_t take = std::min(need, context.size());
  for (std::size_t i = 0; i < take; ++i)
    ctx[need - take + i] = id_of(context[context.size() - take + i]);
  return conditional_ids(pack(ctx), id_of(next));
}

double NgramModel::log_prob(std::span<const std::string> tokens) const {
  if (order_ == 0) throw DataError("language model is not fitted");
  if (tokens.empty()) throw DataError("log_prob of an empty token sequence");
  const auto ids = encode(tokens);
  std::vector<Id> context(static_cast<std::size_t>(order_ - 1), start_id());
  double lp = 0.0;
  for (Id id : ids) {
    lp += std::log(conditional_ids(pack(context), id));
    if (!context.empty()) {
      std::rotate(context.begin(), context.begin() + 1, context.end());
      context.back() = id;
    }
  }
  return lp;
}

double NgramModel::perplexity(std::span<const std::string> tokens) const {
  const double lp = log_prob(tokens);
  return std::exp(-lp / static_cast<double>(tokens.size()));
}

Tokens NgramModel::sample(std::size_t length, double temperature, std::uint64_t seed) const {
  if (order_ == 0) throw DataError("language model is not fitted");
  if (!(temperature > 0.0)) throw ConfigError("sampling temperature must be positive");
  if (words_.size() < 2) throw DataError("language model has no known tokens to sample");
  Rng rng(seed);
  std::vector<Id> context(static_cast<std::size_t>(order_ - 1), start_id());
  std::vector<double> logits(words_.size());
  std::vector<double> weights(words_.size());
  Tokens out;
  out.reserve(length);
  for (std::size_t n = 0; n < length; ++n) {
    const Key key = pack(context);
    double best = -INFINITY;
    for (Id w = 1; w < words_.size(); ++w) {
      logits[w] = std::log(conditional_ids(key, w)) / temperature;
      best = std::max(best, logits[w]);
    }
    weights[0] = 0.0;
    for (Id w = 1; w < words_.size(); ++w) weights[w] = std::exp(logits[w] - best);
    const auto next = static_cast<Id>(rng.categorical(weights));
    out.push_back(words_[next]);
    if (!context.empty()) {
      std::rotate(context.begin(), context.begin() + 1, context.end());
      context.back() = next;
    }
  }
  return out;
}

void NgramModel::save(std::ostream& out) const {
  if (order_ == 0) throw DataError("cannot save an unfitted language model");
  std::ostringstream alpha;
  alpha << std::hexfloat << alpha_;
  out << kFormatTag << '\n'
      << "order " << order_ << '\n'
      << "alpha " << alpha.str() << '\n'
      << "vocab " << words_.size() << '\n';
  for (const auto& w : words_) out << w << '\n';
  std::vector<Key> keys;
  keys.reserve(contexts_.size());
  for (const auto& [k, _] : contexts_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  out << "contexts " << keys.size() << '\n';
  for (Key k : keys) {
    const auto& cc = contexts_.at(k);
    out << k << ' ' << cc.next.size();
    for (auto [id, c] : cc.next) out << ' ' << id << ':' << c;
    out << '\n';
  }
}

NgramModel NgramModel::load(std::istream& in) {
  auto fail = [](const std::string& what) -> DataError {
    return DataError("invalid language model file: " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != kFormatTag) throw fail("missing header");
  NgramModel m;
  std::string key, alpha_text;
  std::size_t vocab = 0, n_contexts = 0;
  if (!(in >> key >> m.order_) || key != "order") throw fail("order");
  if (!(in >> key >> alpha_text) || key != "alpha") throw fail("alpha");
  m.alpha_ = std::strtod(alpha_text.c_str(), nullptr);
  if (m.order_ < 1 || m.order_ > kMaxOrder || !(m.alpha_ > 0.0)) throw fail("parameters");
  if (!(in >> key >> vocab) || key != "vocab" || vocab < 1) throw fail("vocab");
  m.words_.resize(vocab);
  for (auto& w : m.words_)
    if (!(in >> w)) throw fail("vocabulary entries");
  m.rebuild_index();
  if (!(in >> key >> n_contexts) || key != "contexts") throw fail("contexts");
  for (std::size_t i = 0; i < n_contexts; ++i) {
    Key k = 0;
    std::size_t n = 0;
    if (!(in >> k >> n)) throw fail("context record");
    ContextCounts cc;
    for (std::size_t j = 0; j < n; ++j) {
      Id id = 0;
      std::uint32_t c = 0;
      char colon = 0;
      if (!(in >> id >> colon >> c) || colon != ':' || id >= vocab) throw fail("count entry");
      cc.next.emplace_back(id, c);
      cc.total += c;
    }
    m.contexts_.emplace(k, std::move(cc));
  }
  return m;
}

}  // namespace evasion
