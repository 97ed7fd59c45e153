#include "evasion/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "evasion/errors.hpp"

namespace evasion {

namespace {

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(unsigned char c) {
  return c < 128 && std::ispunct(c) != 0;
}

bool attaches_left(std::string_view token) {
  return token == "." || token == "," || token == ";" || token == ":" || token == "!" ||
         token == "?" || token == ")";
}

bool is_sentence_final(std::string_view token) {
  return token == "." || token == "!" || token == "?";
}

std::string sample_id(std::string_view pair_id, Label label) {
  std::string id(pair_id);
  id += '/';
  id += to_string(label);
  return id;
}

}  // namespace

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::human: return "human";
    case Label::ai: return "ai";
    case Label::paraphrased: return "paraphrased";
  }
  return "ai";
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else if (c < 128) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && !attaches_left(t)) out.push_back(' ');
    out += t;
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  return detokenize(tokenize(text));
}

TextSample TextSample::make(std::string id, std::string text, Label label, std::string source) {
  TextSample s;
  s.id = std::move(id);
  s.tokens = tokenize(text);
  s.text = std::move(text);
  s.label = label;
  s.source = std::move(source);
  return s;
}

TextSample TextSample::from_tokens(std::string id, Tokens tokens, Label label,
                                   std::string source) {
  TextSample s;
  s.id = std::move(id);
  s.text = detokenize(tokens);
  s.tokens = std::move(tokens);
  s.label = label;
  s.source = std::move(source);
  return s;
}

void PairedSample::set_paraphrase(std::string text, std::string source) {
  paraphrased = TextSample::make(sample_id(id, Label::paraphrased), std::move(text),
                                 Label::paraphrased, std::move(source));
}

PairedSample make_pair_sample(std::string id, std::string human_text, std::string ai_text,
                              std::string source) {
  PairedSample p;
  p.human = TextSample::make(sample_id(id, Label::human), std::move(human_text), Label::human,
                             source);
  p.ai = TextSample::make(sample_id(id, Label::ai), std::move(ai_text), Label::ai, source);
  p.id = std::move(id);
  return p;
}

std::vector<Chunk> chunk(std::span<const std::string> tokens, std::size_t chunk_limit,
                         std::string_view parent_id) {
  if (chunk_limit == 0) throw ConfigError("chunk limit must be at least 1");
  std::vector<Chunk> chunks;
  std::size_t start = 0;
  while (start < tokens.size()) {
    std::size_t end = tokens.size();
    if (end - start > chunk_limit) {
      end = start + chunk_limit;
      for (std::size_t i = start + chunk_limit; i-- > start;) {
        if (is_sentence_final(tokens[i])) {
          end = i + 1;
          break;
        }
      }
    }
    Chunk c;
    c.parent_id = std::string(parent_id);
    c.index = chunks.size();
    c.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                    tokens.begin() + static_cast<std::ptrdiff_t>(end));
    chunks.push_back(std::move(c));
    start = end;
  }
  return chunks;
}

nlohmann::json to_json(const PairedSample& pair) {
  nlohmann::json j;
  j["id"] = pair.id;
  j["human"] = pair.human.text;
  j["ai"] = pair.ai.text;
  if (pair.paraphrased) j["paraphrased"] = pair.paraphrased->text;
  if (!pair.meta.is_null()) j["meta"] = pair.meta;
  return j;
}

PairedSample pair_from_json(const nlohmann::json& record) {
  if (!record.is_object()) throw DataError("record is not a JSON object");
  auto text_field = [&](const char* key) -> std::string {
    auto it = record.find(key);
    if (it == record.end()) throw DataError(std::string("missing field '") + key + "'");
    if (!it->is_string()) throw DataError(std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
  };
  PairedSample pair = make_pair_sample(text_field("id"), text_field("human"), text_field("ai"));
  if (record.contains("paraphrased")) pair.set_paraphrase(text_field("paraphrased"));
  if (auto it = record.find("meta"); it != record.end()) {
    if (!it->is_object()) throw DataError("field 'meta' is not an object");
    pair.meta = *it;
  }
  return pair;
}

std::vector<PairedSample> parse_corpus(std::istream& in, std::string_view source_name) {
  std::vector<PairedSample> pairs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto where = [&] {
      return std::string(source_name) + ": line " + std::to_string(line_no) + ": ";
    };
    PairedSample pair;
    try {
      pair = pair_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where() + "malformed JSON (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
    if (!seen.insert(pair.id).second)
      throw DataError(where() + "duplicate id '" + pair.id + "'");
    for (TextSample* s : {&pair.human, &pair.ai}) s->source = std::string(source_name);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<PairedSample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, std::span<const PairedSample> pairs) {
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, std::span<const PairedSample> pairs) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  write_corpus(out, pairs);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<Tokens> token_lists(std::span<const PairedSample> pairs, Label side) {
  std::vector<Tokens> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    switch (side) {
      case Label::human: out.push_back(p.human.tokens); break;
      case Label::ai: out.push_back(p.ai.tokens); break;
      case Label::paraphrased:
        if (!p.paraphrased) throw DataError("pair '" + p.id + "' has no paraphrased text");
        out.push_back(p.paraphrased->tokens);
        break;
    }
  }
  return out;
}

}  // namespace evasion
