#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evasion/detector.hpp"
#include "evasion/grpo.hpp"
#include "evasion/policy.hpp"
#include "evasion/remote.hpp"
#include "evasion/synth.hpp"

namespace evasion::cli {

struct DetectorConfig {
  std::string id;
  DetectorKind kind = DetectorKind::perplexity;
  Polarity polarity = Polarity::reports_ai_prob;
  double threshold = 0.5;
  std::string url;
  std::string path = "/detect";
  std::string api_key_env;
};

struct MockConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  std::string path = "/detect";
  Polarity polarity = Polarity::reports_ai_prob;
  std::string backend;  // detector id; empty answers 0.5
  std::vector<int> script;
};

/// Everything a command needs. Loaded from an INI file, then overridden by
/// flags. Paths left empty derive from `out`.
struct RunConfig {
  std::optional<std::uint64_t> seed;

  std::filesystem::path out = "out";
  std::filesystem::path corpus;
  std::filesystem::path eval_corpus;
  std::filesystem::path vocab;
  std::filesystem::path synonyms;
  std::filesystem::path detectors_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path embeddings;

  std::size_t n_pairs = 500;
  std::size_t eval_pairs = 200;
  GeneratorParams generator;  // vocab is filled on use

  int lm_order = 3;
  double lm_alpha = 0.1;

  TrainConfig train;
  InitMode init_mode = InitMode::uniform;
  double identity_prob = 0.9;

  std::size_t paraphrase_group_size = 8;
  std::size_t chunk_limit = kDefaultChunkLimit;
  std::vector<std::string> paraphrase_detectors;

  ClientPolicy client;
  std::map<std::string, DetectorConfig> detectors;
  MockConfig mock;

  std::filesystem::path corpus_path() const;
  std::filesystem::path eval_corpus_path() const;
  std::filesystem::path detectors_path() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path vocab_path() const;
  std::filesystem::path reference_lm_path() const;

  std::uint64_t require_seed() const;
  const DetectorConfig& detector(const std::string& id) const;
};

/// Parses INI text. Unknown sections or keys are errors so typos surface.
RunConfig parse_config(std::istream& in, const std::string& source);
RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> split_list(const std::string& text);

}  // namespace evasion::cli
