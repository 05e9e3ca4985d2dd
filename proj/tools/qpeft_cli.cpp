// qpeft command-line driver. Every command reads its inputs from files and
// writes only into --out.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qpeft/bm25/index.hpp"
#include "qpeft/bm25/run_file.hpp"
#include "qpeft/error.hpp"
#include "qpeft/evalrank/metrics.hpp"
#include "qpeft/evalrank/prompts.hpp"
#include "qpeft/evalrank/report.hpp"
#include "qpeft/evalrank/rerank.hpp"
#include "qpeft/evalrank/scoring.hpp"
#include "qpeft/minilm/pretrain.hpp"
#include "qpeft/minilm/pretrain_data.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/textdata/synthetic.hpp"
#include "qpeft/trainer/batching.hpp"
#include "qpeft/trainer/checkpoint.hpp"
#include "qpeft/trainer/fit.hpp"
#include "qpeft/trainer/qd_gradcheck.hpp"

namespace fs = std::filesystem;
using namespace qpeft;

namespace {

// ---------------------------------------------------------------------------
// Settings: every option is a string bound by name; a key=value config file
// fills whatever the command line left unset.

struct Option {
  std::string value;
  std::string help;
  bool required = false;
  CLI::Option* cli = nullptr;
};

class Settings {
public:
  void add(const std::string& key, std::string def, std::string help, bool required = false) {
    options_[key] = Option{std::move(def), std::move(help), required, nullptr};
    order_.push_back(key);
  }

  void bind(CLI::App* app) {
    for (const auto& key : order_) {
      auto& o = options_.at(key);
      o.cli = app->add_option("--" + key, o.value, o.help);
      if (!o.value.empty()) o.cli->capture_default_str();
    }
  }

  /// Applies the config file and checks required keys. Returns the log header.
  std::string resolve(const std::string& command) {
    std::map<std::string, std::string> file;
    std::vector<std::string> notes;
    const std::string& config_path = options_.at("config").value;
    if (!config_path.empty()) file = read_config(config_path);
    for (const auto& [key, value] : file) {
      auto it = options_.find(key);
      if (it == options_.end() || key == "config") {
        notes.push_back("# ignored config key " + key + " (not used by " + command + ")");
        continue;
      }
      if (it->second.cli->count() > 0) {
        if (it->second.value != value) {
          notes.push_back("# conflict " + key + ": config=" + value + " flag=" + it->second.value + " (flag wins)");
        }
      } else {
        it->second.value = value;
        from_config_.insert(key);
      }
    }
    for (const auto& key : order_) {
      if (options_.at(key).required && options_.at(key).value.empty()) {
        throw ContractError("missing required option --" + key);
      }
    }
    std::ostringstream head;
    head << "# qpeft " << command << '\n';
    for (const auto& key : order_) {
      const auto& o = options_.at(key);
      const char* source = o.cli->count() > 0 ? "flag" : (from_config_.count(key) ? "config" : "default");
      head << "# " << key << '=' << o.value << " (" << source << ")\n";
    }
    for (const auto& n : notes) head << n << '\n';
    return head.str();
  }

  const std::string& str(const std::string& key) const { return options_.at(key).value; }
  bool has(const std::string& key) const { return !str(key).empty(); }
  bool from_flag(const std::string& key) const { return options_.at(key).cli->count() > 0; }

  long integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const long v = std::stol(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractError("--" + key + ": expected an integer, got '" + str(key) + "'");
  }

  std::size_t count(const std::string& key) const {
    const long v = integer(key);
    if (v < 0) throw ContractError("--" + key + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }

  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractError("--" + key + ": expected a number, got '" + str(key) + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : list(key)) {
      std::size_t used = 0;
      long v = -1;
      try {
        v = std::stol(item, &used);
      } catch (const std::exception&) {
      }
      if (v < 0 || used != item.size()) throw ContractError("--" + key + ": bad entry '" + item + "'");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

private:
  static std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open config file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      if (key.rfind("--", 0) == 0) key = key.substr(2);
      out[key] = trim(line.substr(eq + 1));
    }
    return out;
  }

  std::map<std::string, Option> options_;
  std::vector<std::string> order_;
  std::set<std::string> from_config_;
};

// ---------------------------------------------------------------------------
// Helpers shared by the commands.

std::string input(const Settings& s, const std::string& key) {
  const std::string& p = s.str(key);
  if (p.empty()) throw ContractError("missing required option --" + key);
  if (!fs::exists(p)) throw ContractError("--" + key + ": no such file " + p);
  return p;
}

struct Output {
  fs::path dir;
  std::ofstream log;

  Output(const Settings& s, const std::string& command, const std::string& header) : dir(s.str("out")) {
    fs::create_directories(dir);
    log.open(dir / (command + ".log"), std::ios::binary);
    log << header;
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void note(const std::string& line) {
    log << line << '\n';
    std::cout << line << '\n';
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Query> queries_from(const Settings& s, const std::string& key, const Vocab& vocab) {
  return load_queries(input(s, key), &vocab);
}

TokenSeq prompt_ids(const std::string& preset, const Vocab& vocab) {
  return tokenize(prompt_preset(preset).text, vocab);
}

QDConfig qd_config(const Settings& s, int model_dim) {
  QDConfig c;
  c.variant = parse_variant(s.str("variant"));
  c.k = static_cast<int>(s.integer("k"));
  c.heads = static_cast<int>(s.integer("heads"));
  c.mlp_layers = static_cast<int>(s.integer("mlp-layers"));
  c.model_dim = model_dim;
  c.validate();
  return c;
}

TrainConfig train_config(const Settings& s, int model_dim) {
  TrainConfig c;
  c.batch_size = static_cast<int>(s.integer("batch-size"));
  c.max_epochs = static_cast<int>(s.integer("max-epochs"));
  c.patience = static_cast<int>(s.integer("patience"));
  c.lr = s.real("lr");
  c.train_size = s.count("train-size");
  c.eval_size = s.count("eval-size");
  c.seed = static_cast<std::uint64_t>(s.integer("seed"));
  c.prompt = s.str("prompt");
  c.rerank_depth = s.count("depth");
  c.qd = qd_config(s, model_dim);
  c.qd.seed = c.seed;
  c.validate();
  return c;
}

void add_training_options(Settings& s) {
  s.add("variant", "a", "QD variant: r or a");
  s.add("k", "10", "R: hint rows (top-k unique document tokens)");
  s.add("heads", "2", "A: attention heads");
  s.add("mlp-layers", "1", "MLP depth (0, 1 or 2)");
  s.add("lr", "3e-2", "Adam learning rate");
  s.add("batch-size", "4", "queries per batch");
  s.add("max-epochs", "20", "epoch budget");
  s.add("patience", "5", "epochs without eval improvement before stopping");
  s.add("prompt", std::string(kDefaultPrompt), "prompt preset p1..p5");
  s.add("depth", "20", "candidates reranked per query");
  s.add("train-size", "0", "training queries used (0 = all)");
  s.add("eval-size", "0", "eval queries used (0 = all)");
}

struct Collection {
  Vocab vocab;
  Corpus corpus;
  Qrels qrels;
};

Collection load_collection(const Settings& s) {
  Collection c;
  c.vocab = Vocab::load(input(s, "vocab"));
  c.corpus = load_corpus(input(s, "corpus"), &c.vocab);
  if (s.has("qrels")) c.qrels = load_qrels(input(s, "qrels"), &c.corpus);
  return c;
}

ScoredRun rerank_queries(const QueryLikelihoodScorer<double>& scorer, const Corpus& corpus,
                         const std::vector<Query>& queries, const ScoredRun& candidates, std::size_t depth) {
  std::map<std::string, const TokenSeq*> qtok;
  std::vector<std::string> ids;
  for (const auto& q : queries) {
    qtok[q.query_id] = &q.token_ids;
    ids.push_back(q.query_id);
  }
  const PairScorer pair = [&](const std::string& qid, const std::string& did) {
    return scorer.score(*qtok.at(qid), corpus[did].token_ids);
  };
  return rerank(candidates, pair, depth, ids).run;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_synth(const Settings& s, Output& out) {
  SyntheticConfig c;
  c.seed = static_cast<std::uint64_t>(s.integer("seed"));
  c.num_docs = static_cast<int>(s.integer("num-docs"));
  c.num_queries = static_cast<int>(s.integer("num-queries"));
  c.vocab_size = static_cast<int>(s.integer("vocab-size"));
  c.num_topics = static_cast<int>(s.integer("num-topics"));
  const auto data = make_synthetic_dataset(c, prompt_texts());
  save_corpus(out.path("corpus.tsv"), data.corpus);
  save_queries(out.path("queries.tsv"), data.queries);
  std::map<std::string, const Query*> by_id;
  for (const auto& q : data.queries) by_id[q.query_id] = &q;
  for (const Dataset* split : {&data.train, &data.eval, &data.test}) {
    std::vector<Query> qs;
    for (const auto& inst : split->instances) qs.push_back(*by_id.at(inst.query_id));
    save_queries(out.path(std::string("queries.") + split_name(split->split) + ".tsv"), qs);
  }
  save_qrels(out.path("qrels.tsv"), data.qrels);
  save_answers(out.path("answers.tsv"), data.answers);
  data.vocab.save(out.path("vocab.txt"));
  out.note("synth: " + std::to_string(data.corpus.size()) + " docs, " + std::to_string(data.queries.size()) +
           " queries (" + std::to_string(data.train.instances.size()) + "/" +
           std::to_string(data.eval.instances.size()) + "/" + std::to_string(data.test.instances.size()) +
           "), vocab " + std::to_string(data.vocab.size()));
  return 0;
}

int cmd_build_vocab(const Settings& s, Output& out) {
  const Corpus corpus = load_corpus(input(s, "corpus"));
  std::vector<std::string> texts;
  for (const auto& d : corpus.docs()) texts.push_back(d.full_text());
  for (const auto& path : s.list("queries")) {
    if (!fs::exists(path)) throw ContractError("--queries: no such file " + path);
    for (const auto& q : load_queries(path)) texts.push_back(q.text);
  }
  for (const auto& p : prompt_texts()) texts.push_back(p);
  const Vocab vocab = build_vocab(texts, static_cast<int>(s.integer("max-size")));
  vocab.save(out.path("vocab.txt"));
  out.note("build-vocab: " + std::to_string(vocab.size()) + " entries");
  return 0;
}

int cmd_pretrain_lm(const Settings& s, Output& out) {
  const Vocab vocab = Vocab::load(input(s, "vocab"));
  const Corpus corpus = load_corpus(input(s, "corpus"), &vocab);
  const auto queries = queries_from(s, "queries", vocab);
  const std::uint64_t seed = static_cast<std::uint64_t>(s.integer("seed"));

  // Lead tokens are the query-initial words (question words on the synthetic data).
  std::set<TokenId> leads;
  for (const auto& q : queries) {
    if (!q.token_ids.empty()) leads.insert(q.token_ids.front());
  }
  std::vector<TokenSeq> prompts;
  for (const auto& p : kPromptPresets) prompts.push_back(tokenize(p.text, vocab));
  PretrainMix mix;
  mix.fresh_per_doc = static_cast<int>(s.integer("fresh-per-doc"));
  mix.seed = seed;
  const auto seqs = pretraining_sequences(corpus, prompts, std::vector<TokenId>(leads.begin(), leads.end()), mix);

  LMConfig lc;
  lc.vocab_size = static_cast<int>(vocab.size());
  lc.model_dim = static_cast<int>(s.integer("dim"));
  lc.layers = static_cast<int>(s.integer("layers"));
  lc.heads = static_cast<int>(s.integer("lm-heads"));
  lc.ffn_dim = 4 * lc.model_dim;
  lc.max_seq_len = static_cast<int>(s.integer("max-seq-len"));
  lc.seed = seed;
  PretrainConfig pc;
  pc.steps = static_cast<int>(s.integer("steps"));
  pc.batch = static_cast<int>(s.integer("pretrain-batch"));
  pc.lr = s.real("pretrain-lr");
  pc.seed = seed;

  std::vector<double> losses;
  const MiniLM<float> lm = pretrain_lm<float>(seqs, lc, pc, &losses);
  save_lm(out.path("lm.ckpt"), lm);
  std::ofstream curve(out.path("pretrain.csv"), std::ios::binary);
  curve << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) curve << i + 1 << ',' << fmt("%.17g", losses[i]) << '\n';
  const MiniLM<double> frozen = load_lm(out.path("lm.ckpt"));
  out.note("pretrain-lm: " + std::to_string(seqs.size()) + " sequences, perplexity " +
           fmt("%.3f", perplexity(frozen, seqs)) + " (unigram " + fmt("%.3f", unigram_perplexity(seqs)) + ")");
  return 0;
}

int cmd_index(const Settings& s, Output& out) {
  const Vocab vocab = Vocab::load(input(s, "vocab"));
  const Corpus corpus = load_corpus(input(s, "corpus"), &vocab);
  const auto index = InvertedIndex::build(corpus);
  index.save(out.path("index.json"));
  out.note("index: " + std::to_string(index.num_docs()) + " docs, avgdl " + fmt("%.3f", index.avgdl()));
  return 0;
}

int cmd_retrieve(const Settings& s, Output& out) {
  const Vocab vocab = Vocab::load(input(s, "vocab"));
  const auto index = InvertedIndex::load(input(s, "index"));
  const auto queries = queries_from(s, "queries", vocab);
  const Bm25Params params{s.real("k1"), s.real("b")};
  const auto run = retrieve(queries, index, s.count("depth"), params);
  save_run(out.path("bm25.run"), run, "bm25");
  out.note("retrieve: " + std::to_string(run.size()) + " queries, depth " + s.str("depth"));
  return 0;
}

int cmd_train(const Settings& s, Output& out) {
  const Collection c = load_collection(s);
  const MiniLM<double> lm = load_lm(input(s, "lm"));
  const auto candidates = load_run(input(s, "candidates"));
  const TrainConfig tc = train_config(s, lm.dim());
  const auto prompt = prompt_ids(tc.prompt, c.vocab);

  std::size_t skipped_train = 0;
  std::size_t skipped_eval = 0;
  const Dataset train = make_dataset(queries_from(s, "train-queries", c.vocab), c.corpus, c.qrels, candidates,
                                     tc.rerank_depth, Split::Train, &skipped_train);
  const Dataset eval = make_dataset(queries_from(s, "eval-queries", c.vocab), c.corpus, c.qrels, candidates,
                                    tc.rerank_depth, Split::Eval, &skipped_eval);
  out.note("train: " + std::to_string(train.instances.size()) + " train / " +
           std::to_string(eval.instances.size()) + " eval instances (skipped " + std::to_string(skipped_train) +
           "/" + std::to_string(skipped_eval) + ")");

  const auto result = fit(lm, c.corpus, train, eval, candidates, c.qrels, prompt, tc);
  const nlohmann::json extra{{"prompt", tc.prompt}, {"best_epoch", result.best_epoch}};
  save_qd(out.path("qd.ckpt"), result.best, extra);
  save_qd(out.path("qd_last.ckpt"), result.last, extra);
  std::ofstream(out.path("train_log.csv"), std::ios::binary) << training_log_csv(result.log);
  for (const auto& e : result.log) {
    out.note("  epoch " + std::to_string(e.epoch) + " loss " +
             (e.train_loss ? fmt("%.4f", *e.train_loss) : std::string("NA")) + " eval R@10 " +
             fmt("%.4f", e.eval_r10));
  }
  out.note("train: best epoch " + std::to_string(result.best_epoch));
  return 0;
}

int cmd_rerank(const Settings& s, Output& out) {
  const Collection c = load_collection(s);
  const MiniLM<double> lm = load_lm(input(s, "lm"));
  const auto candidates = load_run(input(s, "run"));
  const auto queries = queries_from(s, "queries", c.vocab);

  std::optional<QDModule<double>> qd;
  std::string preset = s.str("prompt");
  if (s.has("qd")) {
    nlohmann::json extra;
    qd.emplace(load_qd(input(s, "qd"), lm.embedding_table(), &extra));
    if (!s.from_flag("prompt") && extra.contains("prompt")) preset = extra.at("prompt").get<std::string>();
  }

  std::optional<Exemplar> exemplar;
  if (s.str("exemplar") == "first") {
    if (qd) throw ContractError("--exemplar applies to the baseline only (drop --qd)");
    if (c.qrels.empty()) throw ContractError("--exemplar first needs --qrels");
    const auto pool = queries_from(s, s.has("exemplar-queries") ? "exemplar-queries" : "queries", c.vocab);
    for (const auto& q : pool) {
      const auto rel = relevant_docs(c.qrels, q.query_id);
      if (rel.empty() || !c.corpus.contains(rel.front())) continue;
      exemplar = Exemplar{q.token_ids, c.corpus[rel.front()].token_ids};
      out.note("rerank: exemplar " + q.query_id + " / " + rel.front());
      break;
    }
    if (!exemplar) throw ContractError("--exemplar first: no query with a judged document");
  } else if (s.str("exemplar") != "none") {
    throw ContractError("--exemplar: expected none or first");
  }

  const QueryLikelihoodScorer<double> scorer(lm, qd ? &*qd : nullptr, prompt_ids(preset, c.vocab),
                                             parse_score_mode(s.str("score-mode")), exemplar);
  const auto run = rerank_queries(scorer, c.corpus, queries, candidates, s.count("depth"));
  const std::string tag = qd ? "qpeft" : "upr";
  save_run(out.path(tag + ".run"), run, tag);
  out.note("rerank: " + std::to_string(run.size()) + " queries, prompt " + preset + ", " +
           std::to_string(scorer.truncations()) + " truncated documents");
  return 0;
}

int cmd_eval(const Settings& s, Output& out) {
  const Corpus corpus = load_corpus(input(s, "corpus"));
  const Qrels qrels = load_qrels(input(s, "qrels"), &corpus);
  const Answers answers = s.has("answers") ? load_answers(input(s, "answers")) : Answers{};
  ScoredRun retriever = load_run(input(s, "retriever"));
  if (s.has("queries")) {
    std::set<std::string> keep;
    for (const auto& q : load_queries(input(s, "queries"))) keep.insert(q.query_id);
    std::erase_if(retriever, [&](const auto& kv) { return !keep.count(kv.first); });
  }
  std::vector<NamedRun> systems;
  for (const auto& item : s.list("runs")) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ContractError("--runs: expected name=path, got " + item);
    const std::string path = item.substr(eq + 1);
    if (!fs::exists(path)) throw ContractError("--runs: no such file " + path);
    systems.push_back({item.substr(0, eq), load_run(path)});
  }
  const auto report = make_report(retriever, systems, qrels, answers, corpus, s.counts("ks"));
  save_report_csv(out.path("report.csv"), report);
  for (const auto& r : report.rows) {
    if (r.metric.find("_imp") != std::string::npos) continue;
    out.note(r.system + " " + r.metric + "@" + std::to_string(r.k) + " " + fmt("%.4f", r.value) +
             (r.p_vs_upr ? " p_vs_upr " + fmt("%.4g", *r.p_vs_upr) : std::string()));
  }
  if (report.hit_from_qrels) out.note("eval: no answers given, Hit@k judged by qrels");
  return 0;
}

int cmd_gradcheck(const Settings& s, Output& out) {
  const std::uint64_t seed = static_cast<std::uint64_t>(s.integer("seed"));
  SyntheticConfig sc;
  sc.seed = seed;
  const auto data = make_synthetic_dataset(sc, prompt_texts());
  LMConfig lc;
  lc.vocab_size = static_cast<int>(data.vocab.size());
  lc.seed = seed;
  MiniLM<double> lm(lc);
  lm.freeze();
  const auto prompt = prompt_ids(std::string(kDefaultPrompt), data.vocab);
  const std::vector<Instance> batch(data.train.instances.begin(), data.train.instances.begin() + 4);
  const auto triples = build_in_batch_negatives(batch, derive_seed(seed, "gradcheck"));
  bool ok = true;
  for (Variant v : {Variant::R, Variant::A}) {
    QDConfig qc;
    qc.variant = v;
    qc.model_dim = lm.dim();
    qc.seed = seed;
    QDModule<double> qd(qc, lm.embedding_table());
    const auto rep = check_qd_gradients(lm, qd, prompt, data.corpus, batch, triples, s.count("sample"), seed,
                                        s.real("eps"));
    ok = ok && rep.max_rel_error < 1e-4;
    out.note("gradcheck variant " + to_string(v) + ": max relative error " + fmt("%.3e", rep.max_rel_error) +
             " over " + std::to_string(rep.coordinates) + " coordinates (worst " + rep.worst_tensor + ")");
  }
  return ok ? 0 : 1;
}

int cmd_sweep(const Settings& s, Output& out) {
  const Collection c = load_collection(s);
  const MiniLM<double> lm = load_lm(input(s, "lm"));
  const auto candidates = load_run(input(s, "candidates"));
  const Answers answers = s.has("answers") ? load_answers(input(s, "answers")) : Answers{};
  const auto test_queries = queries_from(s, "test-queries", c.vocab);
  const std::size_t depth = s.count("depth");
  const Dataset train = make_dataset(queries_from(s, "train-queries", c.vocab), c.corpus, c.qrels, candidates,
                                     depth, Split::Train);
  const Dataset eval =
      make_dataset(queries_from(s, "eval-queries", c.vocab), c.corpus, c.qrels, candidates, depth, Split::Eval);
  const auto sizes = s.counts("train-sizes");
  const auto seeds = s.counts("seeds");
  if (sizes.empty() || seeds.empty()) throw ContractError("sweep: --train-sizes and --seeds must be non-empty");

  std::ofstream csv(out.path("sweep.csv"), std::ios::binary);
  csv << "variant,prompt,train_size,seed,R10,H10\n";
  for (const auto& variant : s.list("variant")) {
    for (const auto& preset : kPromptPresets) {
      for (std::size_t size : sizes) {
        for (std::size_t seed : seeds) {
          TrainConfig tc = train_config(s, lm.dim());
          tc.qd.variant = parse_variant(variant);
          tc.prompt = std::string(preset.id);
          tc.train_size = size;
          tc.seed = seed;
          tc.qd.seed = seed;
          const auto prompt = prompt_ids(tc.prompt, c.vocab);
          const auto result = fit(lm, c.corpus, train, eval, candidates, c.qrels, prompt, tc);
          const QueryLikelihoodScorer<double> scorer(lm, &result.best, prompt);
          const auto run = rerank_queries(scorer, c.corpus, test_queries, candidates, depth);
          const double r10 = recall_at_k(run, c.qrels, 10).mean;
          const double h10 = hit_at_k(run, answers, c.corpus, 10, &c.qrels).mean;
          csv << to_string(tc.qd.variant) << ',' << preset.id << ',' << size << ',' << seed << ','
              << fmt("%.17g", r10) << ',' << fmt("%.17g", h10) << '\n';
          out.note("sweep " + to_string(tc.qd.variant) + " " + std::string(preset.id) + " X=" +
                   std::to_string(size) + " seed " + std::to_string(seed) + ": R@10 " + fmt("%.4f", r10) +
                   " H@10 " + fmt("%.4f", h10));
        }
      }
    }
  }
  return 0;
}

struct Command {
  std::string name;
  std::string help;
  std::function<void(Settings&)> options;
  std::function<int(const Settings&, Output&)> run;
};

std::vector<Command> commands() {
  const auto collection = [](Settings& s) {
    s.add("corpus", "", "corpus.tsv", true);
    s.add("vocab", "", "vocab.txt", true);
  };
  return {
      {"synth", "generate the synthetic dataset",
       [](Settings& s) {
         s.add("num-docs", "500", "documents");
         s.add("num-queries", "300", "queries (split 2/3, 1/6, 1/6)");
         s.add("vocab-size", "300", "content words");
         s.add("num-topics", "10", "topics");
       },
       cmd_synth},
      {"build-vocab", "build vocab.txt from a corpus and query files",
       [](Settings& s) {
         s.add("corpus", "", "corpus.tsv", true);
         s.add("queries", "", "comma-separated query files");
         s.add("max-size", "50000", "vocabulary cap including reserved ids");
       },
       cmd_build_vocab},
      {"pretrain-lm", "pretrain the frozen scoring LM",
       [&](Settings& s) {
         collection(s);
         s.add("queries", "", "training queries (their first words become lead tokens)", true);
         s.add("steps", "20000", "Adam steps");
         s.add("pretrain-batch", "8", "sequences per step");
         s.add("pretrain-lr", "1e-2", "learning rate");
         s.add("fresh-per-doc", "10", "generated sequences per corpus document");
         s.add("dim", "32", "model width");
         s.add("layers", "2", "transformer blocks");
         s.add("lm-heads", "2", "attention heads");
         s.add("max-seq-len", "256", "context length");
       },
       cmd_pretrain_lm},
      {"index", "build the BM25 inverted index", collection, cmd_index},
      {"retrieve", "BM25 top-depth run",
       [](Settings& s) {
         s.add("index", "", "index.json", true);
         s.add("vocab", "", "vocab.txt", true);
         s.add("queries", "", "queries.tsv", true);
         s.add("depth", "20", "documents per query");
         s.add("k1", "1.2", "BM25 k1");
         s.add("b", "0.75", "BM25 b");
       },
       cmd_retrieve},
      {"train", "train a QD module against the frozen LM",
       [&](Settings& s) {
         collection(s);
         s.add("lm", "", "lm.ckpt", true);
         s.add("qrels", "", "qrels.tsv", true);
         s.add("candidates", "", "first-stage run (eval candidates and training negatives)", true);
         s.add("train-queries", "", "training queries", true);
         s.add("eval-queries", "", "eval queries", true);
         add_training_options(s);
       },
       cmd_train},
      {"rerank", "rerank a run with the frozen LM, with or without a QD module",
       [&](Settings& s) {
         collection(s);
         s.add("lm", "", "lm.ckpt", true);
         s.add("qd", "", "qd.ckpt (omit for the empty-hint baseline)");
         s.add("run", "", "candidate run", true);
         s.add("queries", "", "queries to rerank", true);
         s.add("qrels", "", "qrels.tsv (for --exemplar first)");
         s.add("exemplar-queries", "", "queries searched for the exemplar (default --queries)");
         s.add("depth", "20", "candidates reranked per query");
         s.add("prompt", std::string(kDefaultPrompt), "prompt preset (default: the one stored in --qd)");
         s.add("score-mode", "sum", "sum or mean");
         s.add("exemplar", "none", "none or first");
       },
       cmd_rerank},
      {"eval", "Recall@k / Hit@k report with paired t-tests",
       [](Settings& s) {
         s.add("corpus", "", "corpus.tsv", true);
         s.add("qrels", "", "qrels.tsv", true);
         s.add("answers", "", "answers.tsv");
         s.add("retriever", "", "first-stage run", true);
         s.add("runs", "", "name=path,... (a run named upr is the baseline)");
         s.add("queries", "", "restrict to these queries");
         s.add("ks", "1,5,10,20", "cutoffs");
       },
       cmd_eval},
      {"gradcheck", "finite-difference check of both QD variants",
       [](Settings& s) {
         s.add("sample", "100", "coordinates per variant");
         s.add("eps", "1e-3", "central-difference step");
       },
       cmd_gradcheck},
      {"sweep", "train/test grid over training sizes, prompts and seeds",
       [&](Settings& s) {
         collection(s);
         s.add("lm", "", "lm.ckpt", true);
         s.add("qrels", "", "qrels.tsv", true);
         s.add("answers", "", "answers.tsv");
         s.add("candidates", "", "first-stage run", true);
         s.add("train-queries", "", "training queries", true);
         s.add("eval-queries", "", "eval queries", true);
         s.add("test-queries", "", "test queries", true);
         s.add("train-sizes", "50,100,200", "comma-separated training sizes");
         s.add("seeds", "0,1,2", "comma-separated seeds");
         add_training_options(s);
       },
       cmd_sweep},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpeft: query-dependent hints for a frozen query-likelihood reranker"};
  app.require_subcommand(1);
  const auto cmds = commands();
  std::vector<Settings> settings(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto& s = settings[i];
    s.add("config", "", "key=value file; flags win over it");
    s.add("out", "", "output directory", true);
    s.add("seed", "0", "root seed");
    cmds[i].options(s);
    subs.push_back(app.add_subcommand(cmds[i].name, cmds[i].help));
    s.bind(subs.back());
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const std::string header = settings[i].resolve(cmds[i].name);
      Output out(settings[i], cmds[i].name, header);
      return cmds[i].run(settings[i], out);
    } catch (const std::exception& e) {
      std::cerr << "qpeft " << cmds[i].name << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 2;
}
