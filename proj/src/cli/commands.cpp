#include "evasion/cli/commands.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "evasion/cli/config.hpp"
#include "evasion/embedder.hpp"
#include "evasion/errors.hpp"
#include "evasion/evaluate.hpp"
#include "evasion/mock_server.hpp"
#include "evasion/pipeline.hpp"

namespace evasion::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> detectors;
  std::string out;
  std::vector<std::string> corpora;
  std::string checkpoint;
  std::optional<std::size_t> group_size;
  std::optional<double> beta;
  std::optional<double> lr;
  std::optional<std::size_t> steps;
  std::optional<double> threshold;
  std::optional<int> port;
  std::string name;
  bool resume = false;
};

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) c.seed = f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
  if (f.group_size) c.train.group_size = c.paraphrase_group_size = *f.group_size;
  if (f.beta) c.train.beta = *f.beta;
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.steps) c.train.steps = *f.steps;
  if (f.port) c.mock.port = *f.port;
  if (f.threshold) {
    if (!(*f.threshold >= 0.0 && *f.threshold <= 1.0))
      throw ConfigError("--threshold must lie in [0, 1]");
    for (auto& [_, d] : c.detectors) d.threshold = *f.threshold;
  }
  return c;
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

std::shared_ptr<const SynonymTable> load_table(const RunConfig& c) {
  if (!c.synonyms.empty()) {
    require_file(c.synonyms, "synonym table");
    return std::make_shared<const SynonymTable>(SynonymTable::load(c.synonyms));
  }
  require_file(c.vocab_path(), "vocabulary spec");
  return std::make_shared<const SynonymTable>(synonym_entries(VocabSpec::load(c.vocab_path())));
}

DetectorPtr build_detector(const RunConfig& c, const std::string& id) {
  const auto& d = c.detector(id);
  if (d.kind == DetectorKind::remote) {
    DetectorDescriptor desc{d.id, d.kind, d.polarity, d.threshold,
                            {{"url", d.url}, {"path", d.path}, {"api_key_env", d.api_key_env}}};
    return std::make_shared<RemoteDetector>(std::move(desc), c.client);
  }
  const auto file = c.detectors_path() / (id + ".json");
  if (!fs::exists(file))
    throw ConfigError("detector '" + id + "' is not calibrated (missing " + file.string() +
                      "); run the calibrate command first");
  auto j = load_json(file);
  j["threshold"] = d.threshold;
  return detector_from_json(j);
}

std::vector<DetectorPtr> build_detectors(const RunConfig& c, const std::vector<std::string>& ids) {
  if (ids.empty()) throw ConfigError("no detectors selected");
  std::vector<DetectorPtr> out;
  for (const auto& id : ids) out.push_back(build_detector(c, id));
  return out;
}

std::vector<std::string> all_detector_ids(const RunConfig& c) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : c.detectors) ids.push_back(id);
  return ids;
}

std::vector<PairedSample> load_required_corpus(const fs::path& path) {
  require_file(path, "corpus");
  return load_corpus(path);
}

NgramModel load_reference_lm(const RunConfig& c) {
  const auto path = c.reference_lm_path();
  require_file(path, "reference LM (run calibrate first)");
  std::ifstream in(path);
  return NgramModel::load(in);
}

int cmd_synth(const Flags& f, std::ostream& out) {
  RunConfig c = resolve(f);
  if (!f.corpora.empty()) c.corpus = f.corpora.front();
  const auto seed = c.require_seed();
  if (c.n_pairs == 0) throw ConfigError("[synth] n_pairs must be positive");
  GeneratorParams params = c.generator;
  params.vocab = VocabSpec::load(c.vocab_path());
  auto pairs = synth_corpus(seed, c.n_pairs + c.eval_pairs, params);
  std::span<const PairedSample> all(pairs);
  save_corpus(c.corpus_path(), all.first(c.n_pairs));
  out << "wrote " << c.n_pairs << " pairs to " << c.corpus_path().string() << '\n';
  if (c.eval_pairs > 0) {
    save_corpus(c.eval_corpus_path(), all.subspan(c.n_pairs));
    out << "wrote " << c.eval_pairs << " pairs to " << c.eval_corpus_path().string() << '\n';
  }
  return kOk;
}

int cmd_calibrate(const Flags& f, std::ostream& out) {
  RunConfig c = resolve(f);
  if (!f.corpora.empty()) c.corpus = f.corpora.front();
  const auto pairs = load_required_corpus(c.corpus_path());
  const auto human = token_lists(pairs, Label::human);
  const auto ai = token_lists(pairs, Label::ai);
  auto lm = std::make_shared<const NgramModel>(NgramModel::fit(ai, c.lm_order, c.lm_alpha));
  fs::create_directories(c.detectors_path());
  {
    std::ofstream lm_out(c.reference_lm_path(), std::ios::binary | std::ios::trunc);
    lm->save(lm_out);
    if (!lm_out) throw DataError("cannot write " + c.reference_lm_path().string());
  }
  auto ids = f.detectors.empty() ? all_detector_ids(c) : f.detectors;
  std::size_t calibrated = 0;
  for (const auto& id : ids) {
    const auto& d = c.detector(id);
    nlohmann::json j;
    if (d.kind == DetectorKind::perplexity) {
      const auto det = PerplexityDetector::calibrate(id, human, ai, lm, d.threshold);
      j = detector_to_json(*det);
      out << id << ": perplexity detector, tau " << det->tau() << ", scale " << det->scale()
          << '\n';
    } else if (d.kind == DetectorKind::stylometric) {
      const auto det = StylometricDetector::train(id, human, ai);
      j = detector_to_json(*det);
      out << id << ": stylometric detector, " << det->model().iterations << " iterations\n";
    } else {
      continue;
    }
    save_json(c.detectors_path() / (id + ".json"), j);
    ++calibrated;
  }
  out << "calibrated " << calibrated << " detector(s) into " << c.detectors_path().string()
      << '\n';
  return kOk;
}

void append_history(const fs::path& path, const TrainHistory& h, bool append) {
  std::ostringstream csv;
  write_history_csv(csv, h);
  std::string text = csv.str();
  if (append && fs::exists(path)) text = text.substr(text.find('\n') + 1);
  std::ofstream o(path, append ? std::ios::app : std::ios::trunc);
  o << text;
  if (!o) throw DataError("cannot write " + path.string());
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve(f);
  if (!f.corpora.empty()) c.corpus = f.corpora.front();
  if (!f.detectors.empty()) c.train.detector_ids = f.detectors;
  c.train.seed = c.require_seed();
  c.train.validate();
  const auto pairs = load_required_corpus(c.corpus_path());
  const auto table = load_table(c);
  const auto detectors = build_detectors(c, c.train.detector_ids);

  std::size_t start = 0;
  std::optional<SubstitutionPolicy> policy;
  if (f.resume) {
    require_file(c.checkpoint_path(), "checkpoint");
    const auto ck = load_checkpoint(c.checkpoint_path());
    policy.emplace(policy_from_json(ck.policy, table));
    start = ck.step;
    out << "resuming from step " << start << '\n';
  } else {
    policy.emplace(init_policy(table, c.init_mode, c.identity_prob));
  }

  std::vector<TextSample> inputs;
  for (const auto& p : pairs) inputs.push_back(p.ai);
  fs::create_directories(c.out);

  TrainHooks hooks;
  hooks.start_step = start;
  hooks.on_checkpoint = [&](std::size_t done, const ParaphrasePolicy& p) {
    save_checkpoint(c.checkpoint_path(), dynamic_cast<const SubstitutionPolicy&>(p), c.train, done);
  };
  const auto history = train(*policy, inputs, detectors, c.train, hooks);
  save_checkpoint(c.checkpoint_path(), *policy, c.train, std::max(start, c.train.steps));
  append_history(c.out / "history.csv", history, f.resume);
  for (const auto& w : history.warnings) err << "warning: " << w << '\n';
  if (!history.records.empty()) {
    const auto& last = history.records.back();
    out << "trained " << history.records.size() << " steps; final mean reward "
        << last.mean_reward << ", KL " << last.mean_kl << '\n';
  }
  out << "checkpoint: " << c.checkpoint_path().string() << '\n';
  return kOk;
}

int cmd_paraphrase(const Flags& f, std::ostream& out) {
  RunConfig c = resolve(f);
  require_file(c.checkpoint_path(), "checkpoint");
  const auto ck = load_checkpoint(c.checkpoint_path());
  const auto table = load_table(c);
  const auto policy = policy_from_json(ck.policy, table);
  const auto input = f.corpora.empty() ? c.eval_corpus_path() : fs::path(f.corpora.front());
  const auto pairs = load_required_corpus(input);
  auto ids = f.detectors;
  if (ids.empty()) ids = c.paraphrase_detectors;
  if (ids.empty()) ids = ck.config.detector_ids;
  const auto detectors = build_detectors(c, ids);
  ParaphraseOptions opts;
  opts.group_size = c.paraphrase_group_size;
  opts.chunk_limit = c.chunk_limit;
  opts.seed = c.seed.value_or(ck.config.seed);
  const auto name = f.name.empty() ? std::string("paraphrased") : f.name;
  const auto outputs = paraphrase_corpus(policy, pairs, detectors, opts, name);
  const auto path = c.out / (name + ".jsonl");
  save_corpus(path, outputs);
  out << "paraphrased " << outputs.size() << " texts into " << path.string() << '\n';
  return kOk;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void print_matrix(std::ostream& out, const CrossMatrix& m) {
  out << to_string(m.metric) << '\n';
  out << "  " << std::left;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-16s", "detector");
  out << buf;
  for (const auto& col : m.columns) {
    std::snprintf(buf, sizeof buf, "%14s", col.c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    std::snprintf(buf, sizeof buf, "  %-16s", m.rows[r].c_str());
    out << buf;
    for (double v : m.cells[r]) {
      std::snprintf(buf, sizeof buf, "%14.4f", v);
      out << buf;
    }
    out << '\n';
  }
}

int cmd_matrix(const Flags& f, std::ostream& out, bool single) {
  RunConfig c = resolve(f);
  auto files = f.corpora;
  if (files.empty()) files.push_back((c.out / "paraphrased.jsonl").string());
  if (single && files.size() != 1) throw ConfigError("eval takes exactly one --corpus");
  std::vector<NamedOutputs> outputs;
  for (const auto& file : files)
    outputs.push_back({stem_of(file), load_required_corpus(file)});
  const auto& base = outputs.front().pairs;
  const auto ids = f.detectors.empty() ? all_detector_ids(c) : f.detectors;
  const auto detectors = build_detectors(c, ids);
  const auto lm = load_reference_lm(c);

  std::unique_ptr<Embedder> embedder;
  if (!c.embeddings.empty()) {
    require_file(c.embeddings, "embedding file");
    embedder = std::make_unique<PrecomputedEmbedder>(PrecomputedEmbedder::load(c.embeddings));
  } else {
    std::vector<Tokens> docs = token_lists(base, Label::human);
    for (auto& t : token_lists(base, Label::ai)) docs.push_back(std::move(t));
    embedder = std::make_unique<TfidfEmbedder>(TfidfEmbedder::fit(docs));
  }

  const auto ev = cross_evaluate(base, outputs, detectors, lm, *embedder);
  write_cross_evaluation(c.out, ev, outputs, base);
  for (auto m : {Metric::asr, Metric::auroc, Metric::f1}) print_matrix(out, cross_matrix(ev, m));
  out << "similarity";
  for (std::size_t i = 0; i < ev.columns.size(); ++i)
    out << "  " << ev.columns[i] << "=" << ev.column_stats[i].mean_similarity;
  out << "\nreports written to " << c.out.string() << '\n';
  return kOk;
}

int cmd_serve_mock(const Flags& f, std::ostream& out) {
  RunConfig c = resolve(f);
  MockServerConfig mc;
  mc.host = c.mock.host;
  mc.port = c.mock.port;
  mc.path = c.mock.path;
  mc.polarity = c.mock.polarity;
  if (!c.mock.backend.empty()) mc.backend = build_detector(c, c.mock.backend);
  for (int status : c.mock.script) mc.script.push_back({status, {}});

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  MockDetectorServer server(std::move(mc));
  out << "serving detector protocol on " << server.url() << c.mock.path << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  out << "served " << server.scoring_requests() << " scoring requests\n";
  return kOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRPO paraphrase-policy lab for detector evasion experiments", "evasion"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "INI config file");
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_option("--detector", f.detectors, "detector id (repeatable)");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--corpus", f.corpora, "corpus file (repeatable for matrix)");
    sub->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    sub->add_option("--group-size", f.group_size, "candidates per input")->check(CLI::PositiveNumber);
    sub->add_option("--beta", f.beta, "KL penalty weight")->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", f.lr, "learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--steps", f.steps, "training steps");
    sub->add_option("--threshold", f.threshold, "decision threshold for every detector");
    return sub;
  };
  auto* synth = common(app.add_subcommand("synth", "write a synthetic human/ai corpus"));
  auto* calibrate = common(app.add_subcommand("calibrate", "fit the built-in detectors"));
  auto* train = common(app.add_subcommand("train", "train the paraphrase policy with GRPO"));
  train->add_flag("--resume", f.resume, "continue from --checkpoint");
  auto* paraphrase = common(app.add_subcommand("paraphrase", "paraphrase a corpus best-of-G"));
  paraphrase->add_option("--name", f.name, "output name (file stem)");
  auto* eval = common(app.add_subcommand("eval", "evaluate one paraphrased corpus"));
  auto* matrix = common(app.add_subcommand("matrix", "cross-detector matrices over corpora"));
  auto* serve = common(app.add_subcommand("serve-mock", "serve the mock detector"));
  serve->add_option("--port", f.port, "listen port");
  app.require_subcommand(1);

  std::vector<std::string> argv_storage{"evasion"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(f, out);
    if (calibrate->parsed()) return cmd_calibrate(f, out);
    if (train->parsed()) return cmd_train(f, out, err);
    if (paraphrase->parsed()) return cmd_paraphrase(f, out);
    if (eval->parsed()) return cmd_matrix(f, out, true);
    if (matrix->parsed()) return cmd_matrix(f, out, false);
    if (serve->parsed()) return cmd_serve_mock(f, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsageError;
  } catch (const DetectorUnavailable& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace evasion::cli
