#include "evasion/embedder.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "evasion/errors.hpp"

namespace evasion {

TfidfEmbedder TfidfEmbedder::fit(std::span<const Tokens> documents) {
  if (documents.empty()) throw DataError("TF-IDF embedder needs at least one document");
  TfidfEmbedder e;
  e.documents_ = documents.size();
  for (const auto& doc : documents) {
    std::set<std::string_view> terms(doc.begin(), doc.end());
    for (auto t : terms) ++e.df_[std::string(t)];
  }
  return e;
}

double TfidfEmbedder::idf(const std::string& term) const {
  auto it = df_.find(term);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
}

Embedding TfidfEmbedder::embed(const TextSample& text) const {
  Embedding v;
  for (const auto& t : text.tokens) v[t] += 1.0;
  for (auto& [term, w] : v) w *= idf(term);
  return v;
}

PrecomputedEmbedder PrecomputedEmbedder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  PrecomputedEmbedder e;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      e.add(j.at("id").get<std::string>(), j.at("vector").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path.string() + ": line " + std::to_string(n) + ": " + ex.what());
    }
  }
  return e;
}

void PrecomputedEmbedder::add(std::string id, std::span<const double> vector) {
  Embedding v;
  for (std::size_t i = 0; i < vector.size(); ++i)
    if (vector[i] != 0.0) v[std::to_string(i)] = vector[i];
  vectors_.insert_or_assign(std::move(id), std::move(v));
}

Embedding PrecomputedEmbedder::embed(const TextSample& text) const {
  auto it = vectors_.find(text.id);
  if (it == vectors_.end()) throw DataError("no precomputed embedding for '" + text.id + "'");
  return it->second;
}

double cosine(const Embedding& a, const Embedding& b) {
  double na = 0.0, nb = 0.0, dot = 0.0;
  for (const auto& [_, w] : a) na += w * w;
  for (const auto& [_, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) throw DataError("cosine of a zero vector");
  const Embedding& small = a.size() <= b.size() ? a : b;
  const Embedding& large = a.size() <= b.size() ? b : a;
  for (const auto& [k, w] : small)
    if (auto it = large.find(k); it != large.end()) dot += w * it->second;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double semantic_similarity(const TextSample& original, const TextSample& paraphrased,
                           const Embedder& embedder) {
  const auto a = embedder.embed(original);
  const auto b = embedder.embed(paraphrased);
  try {
    return cosine(a, b);
  } catch (const DataError&) {
    const auto& bad = a.empty() ? original : paraphrased;
    throw DataError("zero embedding for text '" + bad.id + "'");
  }
}

}  // namespace evasion
