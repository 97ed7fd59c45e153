#include "evasion/synth.hpp"

#include <cstdio>
#include <fstream>

#include "evasion/errors.hpp"
#include "evasion/rng.hpp"

namespace evasion {

VocabSpec VocabSpec::from_json(const nlohmann::json& j) {
  VocabSpec spec;
  try {
    spec.version = j.at("version").get<std::string>();
    for (const auto& [name, pairs] : j.at("classes").items()) {
      auto& out = spec.classes[name];
      for (const auto& p : pairs) {
        if (!p.is_array() || p.size() != 2)
          throw DataError("class '" + name + "': entries must be [machine, human] pairs");
        out.push_back({p[0].get<std::string>(), p[1].get<std::string>()});
      }
      if (out.empty()) throw DataError("class '" + name + "' is empty");
    }
    spec.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("function_words"))
      spec.function_words = j.at("function_words").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid vocabulary spec: ") + e.what());
  }
  if (spec.templates.empty()) throw DataError("vocabulary spec has no templates");
  for (const auto& t : spec.templates) {
    for (std::size_t pos = t.find('{'); pos != std::string::npos; pos = t.find('{', pos + 1)) {
      const auto close = t.find('}', pos);
      if (close == std::string::npos) throw DataError("unterminated slot in template: " + t);
      if (!spec.classes.count(t.substr(pos + 1, close - pos - 1)))
        throw DataError("template references unknown class: " + t);
    }
  }
  return spec;
}

VocabSpec VocabSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary spec " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("invalid vocabulary spec " + path.string() + ": " + e.what());
  }
}

namespace {

// Expands one template, filling each {CLASS} slot with the machine word of a
// random pair with probability machine_prob and the human word otherwise.
void expand_template(std::string_view tmpl, const VocabSpec& vocab, double machine_prob, Rng& rng,
                     Tokens& out) {
  std::string text;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      text.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find('}', open);
    text.append(tmpl.substr(pos, open - pos));
    const auto& pairs = vocab.classes.at(std::string(tmpl.substr(open + 1, close - open - 1)));
    const auto& pair = pairs[rng.between(0, pairs.size() - 1)];
    text.append(rng.uniform() < machine_prob ? pair.machine : pair.human);
    pos = close + 1;
  }
  const auto tokens = tokenize(text);
  out.insert(out.end(), tokens.begin(), tokens.end());
}

NgramModel fit_seed_lm(std::uint64_t seed, const GeneratorParams& params, double machine_prob) {
  Rng rng(seed);
  std::vector<Tokens> docs(params.seed_documents);
  for (auto& doc : docs) {
    const auto n = rng.between(params.sentences_min, params.sentences_max);
    for (std::uint64_t s = 0; s < n; ++s) {
      const auto& tmpl = params.vocab.templates[rng.between(0, params.vocab.templates.size() - 1)];
      expand_template(tmpl, params.vocab, machine_prob, rng, doc);
    }
  }
  return NgramModel::fit(docs, params.order, params.alpha);
}

void check_params(const GeneratorParams& params) {
  if (params.seed_documents == 0) throw ConfigError("seed_documents must be positive");
  if (params.sentences_min == 0 || params.sentences_min > params.sentences_max)
    throw ConfigError("invalid sentence count range");
  if (params.min_tokens == 0 || params.min_tokens > params.max_tokens)
    throw ConfigError("invalid text length range");
  for (double p : {params.machine_word_prob, params.human_machine_word_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("word probabilities must lie in [0, 1]");
  if (!(params.ai_temperature > 0.0) || !(params.human_temperature > 0.0))
    throw ConfigError("temperatures must be positive");
}

}  // namespace

GeneratorLms build_generator_lms(std::uint64_t seed, const GeneratorParams& params) {
  check_params(params);
  return {fit_seed_lm(derive_seed(seed, {0x5eed, 0}), params, params.machine_word_prob),
          fit_seed_lm(derive_seed(seed, {0x5eed, 1}), params, params.human_machine_word_prob)};
}

std::vector<PairedSample> synth_corpus(std::uint64_t seed, std::size_t n_pairs,
                                       const GeneratorParams& params) {
  if (n_pairs == 0) throw ConfigError("n_pairs must be positive");
  return synth_corpus(seed, n_pairs, params, build_generator_lms(seed, params));
}

std::vector<PairedSample> synth_corpus(std::uint64_t seed, std::size_t n_pairs,
                                       const GeneratorParams& params, const GeneratorLms& lms) {
  if (n_pairs == 0) throw ConfigError("n_pairs must be positive");
  check_params(params);
  const std::string source = "synth:" + params.vocab.version + ":" + std::to_string(seed);
  std::vector<PairedSample> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Rng lengths(derive_seed(seed, {i, 0}));
    const auto human_len = lengths.between(params.min_tokens, params.max_tokens);
    const auto ai_len = lengths.between(params.min_tokens, params.max_tokens);
    const Tokens human =
        lms.human.sample(human_len, params.human_temperature, derive_seed(seed, {i, 1}));
    const Tokens ai = lms.machine.sample(ai_len, params.ai_temperature, derive_seed(seed, {i, 2}));
    char id[32];
    std::snprintf(id, sizeof id, "p%05zu", i);
    PairedSample p = make_pair_sample(id, detokenize(human), detokenize(ai), source);
    p.meta = {{"generator", params.vocab.version}, {"seed", seed}};
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::map<std::string, std::vector<std::string>> synonym_entries(const VocabSpec& vocab) {
  std::map<std::string, std::vector<std::string>> entries;
  for (const auto& [_, pairs] : vocab.classes)
    for (const auto& p : pairs) entries[p.machine] = {p.machine, p.human};
  return entries;
}

}  // namespace evasion
