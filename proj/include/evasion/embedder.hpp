#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>

#include "evasion/corpus.hpp"

namespace evasion {

/// Sparse embedding; dense external vectors use their dimension index as key.
using Embedding = std::map<std::string, double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const TextSample& text) const = 0;
};

/// Term-frequency times smoothed inverse document frequency,
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1, fitted on a document collection.
/// Terms unseen at fit time get df = 0.
class TfidfEmbedder final : public Embedder {
 public:
  static TfidfEmbedder fit(std::span<const Tokens> documents);

  Embedding embed(const TextSample& text) const override;
  double idf(const std::string& term) const;

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

/// Vectors produced by an external model, read from JSONL lines
/// {"id": "<sample id>", "vector": [..]}; looked up by TextSample::id.
class PrecomputedEmbedder final : public Embedder {
 public:
  static PrecomputedEmbedder load(const std::filesystem::path& path);
  void add(std::string id, std::span<const double> vector);

  Embedding embed(const TextSample& text) const override;

 private:
  std::unordered_map<std::string, Embedding> vectors_;
};

/// Cosine similarity; throws DataError when either vector is zero.
double cosine(const Embedding& a, const Embedding& b);

double semantic_similarity(const TextSample& original, const TextSample& paraphrased,
                           const Embedder& embedder);

}  // namespace evasion
