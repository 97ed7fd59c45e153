#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evasion/corpus.hpp"
#include "evasion/detector.hpp"
#include "evasion/ngram.hpp"
#include "evasion/perplexity_detector.hpp"
#include "evasion/policy.hpp"
#include "evasion/stylometric_detector.hpp"

namespace evasion {

struct ParaphraseOptions {
  std::size_t group_size = 8;
  std::size_t chunk_limit = kDefaultChunkLimit;
  std::uint64_t seed = 0;
};

/// Chunks `tokens`, paraphrases every chunk with best-of-G (chunk c uses
/// derive_seed(seed, {c})), and joins the detokenized chunks with a single
/// space.
std::string paraphrase_text(const ParaphrasePolicy& policy, std::span<const std::string> tokens,
                            std::span<const DetectorPtr> detectors, std::size_t group_size,
                            std::size_t chunk_limit, std::uint64_t seed);

/// Fills the paraphrased side of every pair; pair i uses
/// derive_seed(options.seed, {i}).
std::vector<PairedSample> paraphrase_corpus(const ParaphrasePolicy& policy,
                                            std::span<const PairedSample> pairs,
                                            std::span<const DetectorPtr> detectors,
                                            const ParaphraseOptions& options,
                                            const std::string& source = "policy");

// Calibrated detector files ("evasion-detector v1"). The perplexity detector
// embeds its reference LM.
nlohmann::json detector_to_json(const PerplexityDetector& detector);
nlohmann::json detector_to_json(const StylometricDetector& detector);
std::shared_ptr<Detector> detector_from_json(const nlohmann::json& j);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

std::string lm_to_string(const NgramModel& lm);
NgramModel lm_from_string(const std::string& text);

}  // namespace evasion
