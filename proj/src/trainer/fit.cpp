#include "qpeft/trainer/fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "qpeft/evalrank/metrics.hpp"
#include "qpeft/evalrank/rerank.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/trainer/losses.hpp"

namespace qpeft {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (max_epochs < 0) throw ContractError("max_epochs must be >= 0");
  if (patience < 1 || (max_epochs > 0 && patience > max_epochs)) throw ContractError("patience must be in [1, max_epochs]");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("lr must be positive");
  if (rerank_depth < 1) throw ContractError("rerank depth must be >= 1");
  qd.validate();
}

std::vector<Instance> sample_instances(const Dataset& data, std::size_t n, std::uint64_t seed, const char* label) {
  const auto& all = data.instances;
  if (n > all.size()) {
    throw ContractError(std::string("requested ") + std::to_string(n) + " " + label + " instances but the split has " +
                        std::to_string(all.size()));
  }
  if (n == 0 || n == all.size()) return all;
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, label));
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<Instance> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

Dataset make_dataset(const std::vector<Query>& queries, const Corpus& corpus, const Qrels& qrels,
                     const ScoredRun& candidates, std::size_t depth, Split split, std::size_t* skipped) {
  Dataset out;
  out.split = split;
  std::size_t dropped = 0;
  for (const auto& q : queries) {
    const auto rel = relevant_docs(qrels, q.query_id);
    const auto it = candidates.find(q.query_id);
    if (rel.empty() || !corpus.contains(rel.front()) || it == candidates.end()) {
      ++dropped;
      continue;
    }
    Instance inst;
    inst.query_id = q.query_id;
    inst.query_ids = q.token_ids;
    inst.positive = corpus.index_of(rel.front());
    for (std::size_t i = 0; i < std::min(depth, it->second.size()); ++i) {
      const auto& doc = it->second[i].doc_id;
      if (!corpus.contains(doc) || std::binary_search(rel.begin(), rel.end(), doc)) continue;
      inst.negatives.push_back(corpus.index_of(doc));
    }
    if (inst.negatives.empty()) {
      ++dropped;
      continue;
    }
    out.instances.push_back(std::move(inst));
  }
  if (skipped) *skipped = dropped;
  return out;
}

void candidate_negatives(Dataset& data, const ScoredRun& candidates, const Corpus& corpus, const Qrels& qrels,
                         std::size_t depth) {
  for (auto& inst : data.instances) {
    auto it = candidates.find(inst.query_id);
    if (it == candidates.end()) continue;
    const auto rel = relevant_docs(qrels, inst.query_id);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < std::min(depth, it->second.size()); ++i) {
      const auto& doc = it->second[i].doc_id;
      if (!corpus.contains(doc) || std::binary_search(rel.begin(), rel.end(), doc)) continue;
      const std::size_t ix = corpus.index_of(doc);
      if (ix != inst.positive) pool.push_back(ix);
    }
    if (!pool.empty()) inst.negatives = std::move(pool);
  }
}

template <typename Scalar>
double eval_recall10(const QueryLikelihoodScorer<Scalar>& scorer, const Corpus& corpus,
                     const std::vector<Instance>& queries, const ScoredRun& candidates, const Qrels& qrels,
                     std::size_t depth) {
  std::map<std::string, const TokenSeq*> qtok;
  std::vector<std::string> qids;
  for (const auto& inst : queries) {
    qtok[inst.query_id] = &inst.query_ids;
    qids.push_back(inst.query_id);
  }
  const PairScorer pair = [&](const std::string& qid, const std::string& did) {
    return static_cast<double>(scorer.score(*qtok.at(qid), corpus[did].token_ids));
  };
  const auto rr = rerank(candidates, pair, depth, qids);
  ScoredRun run = rr.run;
  for (const auto& q : qids) run.try_emplace(q);  // queries without candidates count as misses
  return recall_at_k(run, qrels, 10).mean;
}

template <typename Scalar>
FitResult<Scalar> fit(const MiniLM<Scalar>& lm, const Corpus& corpus, const Dataset& train, const Dataset& eval,
                      const ScoredRun& eval_candidates, const Qrels& qrels, const TokenSeq& prompt_ids,
                      const TrainConfig& config) {
  config.validate();
  const auto train_set = sample_instances(train, config.train_size, config.seed, "train-sample");
  const auto eval_set = sample_instances(eval, config.eval_size, config.seed, "eval-sample");

  QDConfig qdc = config.qd;
  qdc.model_dim = lm.dim();
  QDModule<Scalar> qd(qdc, lm.embedding_table());
  auto params = qd.parameters();
  AdamHyper hyper;
  hyper.lr = config.lr;
  std::vector<AdamState<Scalar>> adam;
  for (auto* p : params) adam.emplace_back(*p, hyper);

  QueryLikelihoodScorer<Scalar> scorer(lm, &qd, prompt_ids, ScoreMode::Sum);
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng negative_rng(derive_seed(config.seed, "negative-sampling"));

  FitResult<Scalar> result{qd, qd, 0, {}, std::vector<double>(params.size(), 0.0)};
  double best = eval_recall10(scorer, corpus, eval_set, eval_candidates, qrels, config.rerank_depth);
  result.log.push_back({0, std::nullopt, best, best});
  int since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t b = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs && !train_set.empty(); ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += b) {
      std::vector<Instance> batch;
      for (std::size_t i = start; i < std::min(start + b, order.size()); ++i) batch.push_back(train_set[order[i]]);
      const auto triples = build_in_batch_negatives(batch, negative_rng);
      GradSet<Scalar> grads = zeros_like(params);
      const auto bl = batch_loss(scorer, corpus, batch, triples, &grads);
      if (!std::isfinite(bl.loss)) {
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + " (first query " + batch.front().query_id + ")");
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        result.grad_mass[i] += static_cast<double>(grads[i].cwiseAbs().sum());
        params[i]->accumulate(grads[i]);
        adam_step(*params[i], adam[i]);
      }
      loss_sum += bl.loss;
      ++batches;
    }
    const double r10 = eval_recall10(scorer, corpus, eval_set, eval_candidates, qrels, config.rerank_depth);
    if (r10 > best) {
      best = r10;
      result.best = qd;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), r10, best});
    if (since_best >= config.patience) break;
  }
  result.last = qd;
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,eval_R10,best_so_far\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << (e.train_loss ? fmt(*e.train_loss) : "NA") << ',' << fmt(e.eval_r10) << ','
        << fmt(e.best_so_far) << '\n';
  }
  return out.str();
}

std::vector<EpochLog> parse_training_log_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::vector<EpochLog> out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "epoch,train_loss,eval_R10,best_so_far") throw ParseError("training log: bad header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw ParseError("training log:" + std::to_string(lineno) + ": expected 4 fields");
    try {
      EpochLog e;
      e.epoch = std::stoi(f[0]);
      if (f[1] != "NA") e.train_loss = std::stod(f[1]);
      e.eval_r10 = std::stod(f[2]);
      e.best_so_far = std::stod(f[3]);
      out.push_back(e);
    } catch (const std::logic_error&) {
      throw ParseError("training log:" + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

template double eval_recall10(const QueryLikelihoodScorer<double>&, const Corpus&, const std::vector<Instance>&,
                              const ScoredRun&, const Qrels&, std::size_t);
template double eval_recall10(const QueryLikelihoodScorer<float>&, const Corpus&, const std::vector<Instance>&,
                              const ScoredRun&, const Qrels&, std::size_t);
template FitResult<double> fit(const MiniLM<double>&, const Corpus&, const Dataset&, const Dataset&,
                               const ScoredRun&, const Qrels&, const TokenSeq&, const TrainConfig&);
template FitResult<float> fit(const MiniLM<float>&, const Corpus&, const Dataset&, const Dataset&,
                              const ScoredRun&, const Qrels&, const TokenSeq&, const TrainConfig&);

}  // namespace qpeft
