#include "evasion/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <sstream>

#include "evasion/errors.hpp"

namespace evasion::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

class Section {
 public:
  Section(const pt::ptree& tree, std::string name, std::string source)
      : tree_(tree), name_(std::move(name)), source_(std::move(source)) {}

  void done() const {
    for (const auto& [key, _] : tree_)
      if (!seen_.count(key)) throw ConfigError(source_ + ": unknown key '" + key + "' in [" + name_ + "]");
  }

  template <typename T>
  void get(const std::string& key, T& value) {
    seen_.insert(key);
    const auto node = tree_.get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!node) return;
    try {
      value = node->get_value<T>();
    } catch (const pt::ptree_error&) {
      throw ConfigError(source_ + ": [" + name_ + "] " + key + ": cannot parse '" +
                        node->data() + "'");
    }
  }

  std::optional<std::string> text(const std::string& key) {
    seen_.insert(key);
    const auto node = tree_.get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!node) return std::nullopt;
    return trim(node->data());
  }

  void path(const std::string& key, std::filesystem::path& value) {
    if (auto t = text(key)) value = *t;
  }

  template <typename T>
  void positive(const std::string& key, T& value) {
    get(key, value);
    if (!(value > T{})) throw ConfigError(source_ + ": [" + name_ + "] " + key + " must be positive");
  }

 private:
  const pt::ptree& tree_;
  std::string name_;
  std::string source_;
  std::set<std::string> seen_;
};

Polarity polarity_of(const std::string& text, const std::string& where) {
  try {
    return parse_polarity(text);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (name != "seed") throw ConfigError(source + ": unknown top-level key '" + name + "'");
      try {
        c.seed = node.get_value<std::uint64_t>();
      } catch (const pt::ptree_error&) {
        throw ConfigError(source + ": seed: cannot parse '" + node.data() + "'");
      }
      continue;
    }
    Section s(node, name, source);
    if (name == "paths") {
      s.path("out", c.out);
      s.path("corpus", c.corpus);
      s.path("eval_corpus", c.eval_corpus);
      s.path("vocab", c.vocab);
      s.path("synonyms", c.synonyms);
      s.path("detectors", c.detectors_dir);
      s.path("checkpoint", c.checkpoint);
      s.path("embeddings", c.embeddings);
    } else if (name == "synth") {
      auto& g = c.generator;
      s.get("n_pairs", c.n_pairs);
      s.get("eval_pairs", c.eval_pairs);
      s.get("seed_documents", g.seed_documents);
      s.get("sentences_min", g.sentences_min);
      s.get("sentences_max", g.sentences_max);
      s.get("machine_word_prob", g.machine_word_prob);
      s.get("human_machine_word_prob", g.human_machine_word_prob);
      s.get("order", g.order);
      s.get("alpha", g.alpha);
      s.get("ai_temperature", g.ai_temperature);
      s.get("human_temperature", g.human_temperature);
      s.get("min_tokens", g.min_tokens);
      s.get("max_tokens", g.max_tokens);
    } else if (name == "lm") {
      s.get("order", c.lm_order);
      s.positive("alpha", c.lm_alpha);
    } else if (name == "train") {
      auto& t = c.train;
      s.get("group_size", t.group_size);
      s.get("learning_rate", t.learning_rate);
      s.get("beta", t.beta);
      s.get("batch_size", t.batch_size);
      s.get("steps", t.steps);
      s.get("checkpoint_every", t.checkpoint_every);
      s.get("workers", t.workers);
      if (auto d = s.text("detector")) t.detector_ids = split_list(*d);
      if (auto m = s.text("init_mode")) {
        try {
          c.init_mode = parse_init_mode(*m);
        } catch (const Error& e) {
          throw ConfigError(source + ": [train] init_mode: " + e.what());
        }
      }
      s.get("identity_prob", c.identity_prob);
    } else if (name == "paraphrase") {
      s.positive("group_size", c.paraphrase_group_size);
      s.positive("chunk_limit", c.chunk_limit);
      if (auto d = s.text("detectors")) c.paraphrase_detectors = split_list(*d);
    } else if (name == "client") {
      double backoff_ms = 200, timeout_ms = 10000;
      s.get("rate_limit", c.client.rate_limit);
      s.get("burst", c.client.burst);
      s.get("max_retries", c.client.max_retries);
      s.get("backoff_ms", backoff_ms);
      s.get("timeout_ms", timeout_ms);
      s.get("cache", c.client.cache_enabled);
      c.client.backoff_base = std::chrono::microseconds(static_cast<long long>(backoff_ms * 1000));
      c.client.timeout = std::chrono::microseconds(static_cast<long long>(timeout_ms * 1000));
      try {
        c.client.validate();
      } catch (const Error& e) {
        throw ConfigError(source + ": [client] " + e.what());
      }
    } else if (name == "mock") {
      s.get("host", c.mock.host);
      s.get("port", c.mock.port);
      s.get("path", c.mock.path);
      if (auto p = s.text("polarity")) c.mock.polarity = polarity_of(*p, source + ": [mock]");
      if (auto b = s.text("backend")) c.mock.backend = *b;
      if (auto sc = s.text("script")) {
        for (const auto& item : split_list(*sc)) {
          try {
            c.mock.script.push_back(std::stoi(item));
          } catch (const std::exception&) {
            throw ConfigError(source + ": [mock] script: bad status '" + item + "'");
          }
        }
      }
    } else if (name.rfind("detector.", 0) == 0 && name.size() > 9) {
      DetectorConfig d;
      d.id = name.substr(9);
      if (auto k = s.text("kind")) {
        try {
          d.kind = parse_detector_kind(*k);
        } catch (const Error& e) {
          throw ConfigError(source + ": [" + name + "] " + e.what());
        }
      }
      if (auto p = s.text("polarity")) d.polarity = polarity_of(*p, source + ": [" + name + "]");
      s.get("threshold", d.threshold);
      if (!(d.threshold >= 0.0 && d.threshold <= 1.0))
        throw ConfigError(source + ": [" + name + "] threshold must lie in [0, 1]");
      s.get("url", d.url);
      s.get("path", d.path);
      s.get("api_key_env", d.api_key_env);
      if (d.kind == DetectorKind::remote && d.url.empty())
        throw ConfigError(source + ": [" + name + "] remote detectors need a url");
      if (d.kind == DetectorKind::scripted)
        throw ConfigError(source + ": [" + name + "] scripted detectors exist only in tests");
      c.detectors[d.id] = d;
    } else {
      throw ConfigError(source + ": unknown section [" + name + "]");
    }
    s.done();
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

std::filesystem::path RunConfig::corpus_path() const {
  return corpus.empty() ? out / "train.jsonl" : corpus;
}
std::filesystem::path RunConfig::eval_corpus_path() const {
  return eval_corpus.empty() ? out / "eval.jsonl" : eval_corpus;
}
std::filesystem::path RunConfig::detectors_path() const {
  return detectors_dir.empty() ? out / "detectors" : detectors_dir;
}
std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out / "checkpoint.json" : checkpoint;
}
std::filesystem::path RunConfig::vocab_path() const {
  return vocab.empty() ? std::filesystem::path(EVASION_DATA_DIR) / "synth_vocab_v1.json" : vocab;
}
std::filesystem::path RunConfig::reference_lm_path() const {
  return detectors_path() / "reference_lm.txt";
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("a seed is required (config 'seed = N' or --seed)");
  return *seed;
}

const DetectorConfig& RunConfig::detector(const std::string& id) const {
  auto it = detectors.find(id);
  if (it == detectors.end()) throw ConfigError("no [detector." + id + "] section in config");
  return it->second;
}

}  // namespace evasion::cli
