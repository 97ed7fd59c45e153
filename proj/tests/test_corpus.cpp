#include <sstream>

#include "doctest.h"
#include "evasion/corpus.hpp"
#include "evasion/errors.hpp"
#include "evasion/ngram.hpp"
#include "helpers.hpp"

using namespace evasion;

TEST_CASE("tokenize splits punctuation and lowercases") {
  CHECK(tokenize("The study, in fact.") == Tokens{"the", "study", ",", "in", "fact", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("  \t\n ").empty());
  CHECK(tokenize("Don't STOP!") == Tokens{"don", "'", "t", "stop", "!"});
}

TEST_CASE("tokenize is idempotent on normalized text") {
  const std::string t = "A Result, Which (we think) holds; see: it!";
  const auto once = normalize_text(t);
  CHECK(normalize_text(once) == once);
  CHECK(tokenize(once) == tokenize(t));
}

TEST_CASE("detokenize round-trips generated texts up to case and whitespace") {
  const auto pairs = synth_corpus(11, 50, testing::default_params());
  int checked = 0;
  for (const auto& p : pairs) {
    for (const auto* s : {&p.human, &p.ai}) {
      const auto again = detokenize(tokenize(s->text));
      CHECK(tokenize(again) == s->tokens);
      std::string squashed_a, squashed_b;
      for (char c : again)
        if (!std::isspace(static_cast<unsigned char>(c))) squashed_a += static_cast<char>(std::tolower(c));
      for (char c : s->text)
        if (!std::isspace(static_cast<unsigned char>(c))) squashed_b += static_cast<char>(std::tolower(c));
      CHECK(squashed_a == squashed_b);
      ++checked;
    }
  }
  CHECK(checked == 100);
}

namespace {

Tokens words(std::size_t n) {
  Tokens t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("w" + std::to_string(i % 7));
  return t;
}

Tokens concat(const std::vector<Chunk>& chunks) {
  Tokens out;
  for (const auto& c : chunks) out.insert(out.end(), c.tokens.begin(), c.tokens.end());
  return out;
}

}  // namespace

TEST_CASE("chunk sizes") {
  const auto t1000 = words(1000);
  const auto c = chunk(t1000, 512);
  REQUIRE(c.size() == 2);
  CHECK(c[0].tokens.size() + c[1].tokens.size() == 1000);
  CHECK(c[0].tokens.size() <= 512);
  CHECK(c[1].tokens.size() <= 512);
  CHECK(chunk(words(512), 512).size() == 1);
  CHECK(chunk(Tokens{}, 512).empty());
}

TEST_CASE("chunk prefers the last sentence end inside the window") {
  auto t = words(513);
  t[400] = ".";
  const auto c = chunk(t, 512, "doc");
  REQUIRE(c.size() == 2);
  CHECK(c[0].tokens.size() == 401);
  CHECK(c[1].tokens.size() == 112);
  CHECK(c[0].parent_id == "doc");
  CHECK(c[1].index == 1);
  CHECK_THROWS_AS(chunk(t, 0), ConfigError);
}

TEST_CASE("chunk reassembly holds for random inputs and limits") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens t;
    const auto n = rng.between(0, 400);
    for (std::uint64_t i = 0; i < n; ++i)
      t.push_back(rng.uniform() < 0.1 ? "." : "w" + std::to_string(rng.between(0, 9)));
    const auto limit = rng.between(1, 60);
    const auto c = chunk(t, limit);
    CHECK(concat(c) == t);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(!c[i].tokens.empty());
      CHECK(c[i].tokens.size() <= limit);
      CHECK(c[i].index == i);
    }
  }
}

TEST_CASE("load_corpus parses records and reports errors by line") {
  std::istringstream ok(
      R"({"id":"a","human":"One text.","ai":"Two text."})"
      "\n"
      R"({"id":"b","human":"x","ai":"y","paraphrased":"z","meta":{"k":1}})"
      "\n"
      R"({"id":"c","human":"x","ai":"y"})"
      "\n");
  const auto pairs = parse_corpus(ok, "mem");
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].human.tokens == Tokens{"one", "text", "."});
  CHECK(pairs[0].human.label == Label::human);
  CHECK(pairs[0].ai.label == Label::ai);
  CHECK(!pairs[0].paraphrased);
  REQUIRE(pairs[1].paraphrased);
  CHECK(pairs[1].paraphrased->label == Label::paraphrased);
  CHECK(pairs[1].meta["k"] == 1);
  CHECK(pairs[1].human.id != pairs[1].ai.id);

  std::istringstream broken(R"({"id":"a","human":"x","ai":"y"})"
                            "\n{broken\n");
  try {
    parse_corpus(broken, "mem");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::istringstream dup(R"({"id":"a","human":"x","ai":"y"})"
                         "\n"
                         R"({"id":"a","human":"x","ai":"y"})"
                         "\n");
  try {
    parse_corpus(dup, "mem");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }

  std::istringstream missing(R"({"id":"a","human":"x"})"
                             "\n");
  CHECK_THROWS_AS(parse_corpus(missing, "mem"), DataError);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), DataError);
}

TEST_CASE("write(load(f)) equals the normalized file byte for byte") {
  const auto pairs = synth_corpus(3, 20, testing::default_params());
  std::ostringstream first;
  write_corpus(first, pairs);
  std::istringstream in(first.str());
  const auto loaded = parse_corpus(in, "mem");
  std::ostringstream second;
  write_corpus(second, loaded);
  CHECK(first.str() == second.str());

  // A hand-written file with other key order and spacing normalizes to the
  // same bytes once loaded and written.
  std::istringstream messy(R"({ "ai": "Two.", "id": "x",   "human": "One." })"
                           "\n");
  std::ostringstream canon;
  write_corpus(canon, parse_corpus(messy, "mem"));
  CHECK(canon.str() == "{\"ai\":\"Two.\",\"human\":\"One.\",\"id\":\"x\"}\n");
}

TEST_CASE("synth_corpus is deterministic and validates its input") {
  const auto params = testing::default_params();
  std::ostringstream a, b;
  write_corpus(a, synth_corpus(7, 10, params));
  write_corpus(b, synth_corpus(7, 10, params));
  CHECK(a.str() == b.str());
  std::ostringstream c;
  write_corpus(c, synth_corpus(8, 10, params));
  CHECK(a.str() != c.str());
  CHECK_THROWS_AS(synth_corpus(7, 0, params), ConfigError);

  const auto pairs = synth_corpus(7, 10, params);
  CHECK(pairs[3].id == "p00003");
  for (const auto& p : pairs) {
    CHECK(p.ai.tokens.size() >= params.min_tokens);
    CHECK(p.ai.tokens.size() <= params.max_tokens);
    CHECK(p.human.tokens.size() >= params.min_tokens);
    CHECK(p.human.tokens.size() <= params.max_tokens);
  }
}

TEST_CASE("ai texts have lower perplexity than human texts under the machine LM") {
  const auto params = testing::default_params();
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto lms = build_generator_lms(seed, params);
    const auto pairs = synth_corpus(seed, 60, params, lms);
    double ai = 0.0, human = 0.0;
    for (const auto& p : pairs) {
      ai += lms.machine.perplexity(p.ai.tokens);
      human += lms.machine.perplexity(p.human.tokens);
    }
    CHECK(ai < human);
  }
}

TEST_CASE("vocabulary spec validation") {
  auto j = nlohmann::json::parse(R"({"version":"v","classes":{"A":[["x","y"]]},
                                     "templates":["the {A} ."]})");
  CHECK(VocabSpec::from_json(j).classes.at("A").size() == 1);
  j["templates"] = {"the {B} ."};
  CHECK_THROWS_AS(VocabSpec::from_json(j), DataError);
  j["templates"] = nlohmann::json::array();
  CHECK_THROWS_AS(VocabSpec::from_json(j), DataError);
  const auto entries = synonym_entries(testing::default_params().vocab);
  for (const auto& [word, cands] : entries) {
    CHECK(cands.size() == 2);
    CHECK(cands[0] == word);
  }
}
