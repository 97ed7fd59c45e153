#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "evasion/corpus.hpp"
#include "evasion/ngram.hpp"

namespace evasion {

/// Generator vocabulary: slot classes whose entries pair a low-surprisal
/// ("machine-flavored") word with a high-surprisal ("human-flavored")
/// synonym, plus sentence templates with {CLASS} slots.
struct VocabSpec {
  struct SynonymPair {
    std::string machine;
    std::string human;
  };

  std::string version;
  std::map<std::string, std::vector<SynonymPair>> classes;
  std::vector<std::string> templates;
  std::vector<std::string> function_words;

  static VocabSpec from_json(const nlohmann::json& j);
  static VocabSpec load(const std::filesystem::path& path);
};

struct GeneratorParams {
  VocabSpec vocab;
  std::size_t seed_documents = 400;
  std::size_t sentences_min = 6;
  std::size_t sentences_max = 14;
  /// Probability a template slot takes the machine-flavored word in the seed
  /// text of the machine LM, and of the human LM.
  double machine_word_prob = 1.0;
  double human_machine_word_prob = 0.0;
  int order = 3;
  /// Generator smoothing; kept small so samples follow observed
  /// continuations rather than the smoothing floor.
  double alpha = 0.001;
  double ai_temperature = 0.8;
  double human_temperature = 0.9;
  std::size_t min_tokens = 100;
  std::size_t max_tokens = 300;
};

/// The two generators: ai texts come from `machine`, human texts from `human`.
struct GeneratorLms {
  NgramModel machine;
  NgramModel human;
};

/// Fits both generator LMs on template-expanded seed text. Deterministic in
/// (seed, params).
GeneratorLms build_generator_lms(std::uint64_t seed, const GeneratorParams& params);

/// Synthesizes n_pairs human/ai pairs: human texts are samples of the human
/// LM at human_temperature and ai texts samples of the machine LM at
/// ai_temperature. Pair ids are "p00000", "p00001", ... Throws ConfigError
/// when n_pairs is zero.
std::vector<PairedSample> synth_corpus(std::uint64_t seed, std::size_t n_pairs,
                                       const GeneratorParams& params);

/// Same, reusing already built generators.
std::vector<PairedSample> synth_corpus(std::uint64_t seed, std::size_t n_pairs,
                                       const GeneratorParams& params, const GeneratorLms& lms);

/// Substitution table pairing each machine-flavored word with its
/// human-flavored synonym: {"machine": ["machine", "human"], ...}.
std::map<std::string, std::vector<std::string>> synonym_entries(const VocabSpec& vocab);

}  // namespace evasion
