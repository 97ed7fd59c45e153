#include "evasion/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "evasion/errors.hpp"
#include "evasion/rng.hpp"

namespace evasion {

namespace {

constexpr const char* kDetectorFormat = "evasion-detector v1";

nlohmann::json descriptor_json(const DetectorDescriptor& d) {
  return {{"format", kDetectorFormat},
          {"id", d.id},
          {"kind", to_string(d.kind)},
          {"threshold", d.threshold}};
}

}  // namespace

std::string paraphrase_text(const ParaphrasePolicy& policy, std::span<const std::string> tokens,
                            std::span<const DetectorPtr> detectors, std::size_t group_size,
                            std::size_t chunk_limit, std::uint64_t seed) {
  std::string out;
  for (const auto& c : chunk(tokens, chunk_limit)) {
    const auto best =
        paraphrase_best_of(policy, c.tokens, group_size, detectors, derive_seed(seed, {c.index}));
    if (!out.empty()) out += ' ';
    out += detokenize(best.output_tokens);
  }
  return out;
}

std::vector<PairedSample> paraphrase_corpus(const ParaphrasePolicy& policy,
                                            std::span<const PairedSample> pairs,
                                            std::span<const DetectorPtr> detectors,
                                            const ParaphraseOptions& options,
                                            const std::string& source) {
  if (options.group_size == 0) throw ConfigError("group_size must be at least 1");
  if (options.chunk_limit == 0) throw ConfigError("chunk_limit must be at least 1");
  std::vector<PairedSample> out(pairs.begin(), pairs.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].set_paraphrase(paraphrase_text(policy, out[i].ai.tokens, detectors, options.group_size,
                                          options.chunk_limit, derive_seed(options.seed, {i})),
                          source);
  }
  return out;
}

std::string lm_to_string(const NgramModel& lm) {
  std::ostringstream out;
  lm.save(out);
  return out.str();
}

NgramModel lm_from_string(const std::string& text) {
  std::istringstream in(text);
  return NgramModel::load(in);
}

nlohmann::json detector_to_json(const PerplexityDetector& detector) {
  auto j = descriptor_json(detector.descriptor());
  j["tau"] = detector.tau();
  j["scale"] = detector.scale();
  j["lm"] = lm_to_string(detector.lm());
  return j;
}

nlohmann::json detector_to_json(const StylometricDetector& detector) {
  auto j = descriptor_json(detector.descriptor());
  const auto& m = detector.model();
  j["function_words"] = detector.function_words();
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  j["feature_mean"] = m.feature_mean;
  j["feature_scale"] = m.feature_scale;
  j["iterations"] = m.iterations;
  return j;
}

std::shared_ptr<Detector> detector_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kDetectorFormat)
      throw DataError("unsupported detector format " + j.at("format").dump());
    DetectorDescriptor d;
    d.id = j.at("id").get<std::string>();
    d.kind = parse_detector_kind(j.at("kind").get<std::string>());
    d.threshold = j.at("threshold").get<double>();
    if (d.kind == DetectorKind::perplexity) {
      auto lm = std::make_shared<const NgramModel>(lm_from_string(j.at("lm").get<std::string>()));
      return std::make_shared<PerplexityDetector>(std::move(d), std::move(lm),
                                                  j.at("tau").get<double>(),
                                                  j.at("scale").get<double>());
    }
    if (d.kind == DetectorKind::stylometric) {
      LogisticModel m;
      m.weights = j.at("weights").get<std::vector<double>>();
      m.bias = j.at("bias").get<double>();
      m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
      m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
      m.iterations = j.at("iterations").get<std::size_t>();
      return std::make_shared<StylometricDetector>(
          std::move(d), j.at("function_words").get<std::vector<std::string>>(), std::move(m));
    }
    throw DataError("detector kind '" + std::string(to_string(d.kind)) + "' cannot be loaded");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid detector file: ") + e.what());
  }
}

void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace evasion
