#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace evasion {

using Tokens = std::vector<std::string>;

enum class Label { human, ai, paraphrased };

std::string_view to_string(Label label) noexcept;

/// Lowercases ASCII, splits on whitespace, and emits every ASCII
/// punctuation character as its own token. Non-ASCII bytes are kept.
Tokens tokenize(std::string_view text);

/// Joins tokens with single spaces, attaching closing punctuation to the
/// preceding token.
std::string detokenize(std::span<const std::string> tokens);

/// Canonical form used for hashing and comparisons: detokenize(tokenize(t)).
std::string normalize_text(std::string_view text);

struct TextSample {
  std::string id;
  std::string text;
  Tokens tokens;
  Label label = Label::ai;
  std::string source;

  /// Builds a sample whose tokens are tokenize(text).
  static TextSample make(std::string id, std::string text, Label label, std::string source = {});
  /// Builds a sample from tokens; text is detokenize(tokens).
  static TextSample from_tokens(std::string id, Tokens tokens, Label label, std::string source = {});
};

struct PairedSample {
  std::string id;
  TextSample human;
  TextSample ai;
  std::optional<TextSample> paraphrased;
  nlohmann::json meta;  // null when absent

  /// Attaches a paraphrase of the ai text, labelled and id'd consistently.
  void set_paraphrase(std::string text, std::string source = {});
};

PairedSample make_pair_sample(std::string id, std::string human_text, std::string ai_text,
                              std::string source = {});

struct Chunk {
  std::string parent_id;
  std::size_t index = 0;
  Tokens tokens;
};

inline constexpr std::size_t kDefaultChunkLimit = 512;

/// Splits tokens into chunks of at most chunk_limit tokens. Each cut is
/// placed after the last sentence-final mark (. ! ?) that fits in the
/// window, falling back to a hard cut at the limit.
std::vector<Chunk> chunk(std::span<const std::string> tokens,
                         std::size_t chunk_limit = kDefaultChunkLimit,
                         std::string_view parent_id = {});

// JSONL corpus files: {"id", "human", "ai", "paraphrased"?, "meta"?} per line.

nlohmann::json to_json(const PairedSample& pair);
PairedSample pair_from_json(const nlohmann::json& record);

std::vector<PairedSample> parse_corpus(std::istream& in, std::string_view source_name);
std::vector<PairedSample> load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const PairedSample> pairs);
void save_corpus(const std::filesystem::path& path, std::span<const PairedSample> pairs);

/// Collects the token lists of one side of every pair.
std::vector<Tokens> token_lists(std::span<const PairedSample> pairs, Label side);

}  // namespace evasion
