#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>

#include "qpeft/bm25/index.hpp"
#include "qpeft/evalrank/prompts.hpp"
#include "qpeft/minilm/loglik.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/textdata/synthetic.hpp"
#include "qpeft/trainer/assemble.hpp"
#include "qpeft/trainer/batching.hpp"
#include "qpeft/trainer/checkpoint.hpp"
#include "qpeft/trainer/fit.hpp"
#include "qpeft/trainer/losses.hpp"
#include "qpeft/trainer/qd_gradcheck.hpp"

using namespace qpeft;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qpeft_test_trainer";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Instance instance(std::size_t positive, std::vector<std::size_t> negatives) {
  Instance i;
  i.query_id = "q" + std::to_string(positive);
  i.query_ids = {5, 6};
  i.positive = positive;
  i.negatives = std::move(negatives);
  return i;
}

struct World {
  SyntheticData data;
  LMConfig lm_config;
  TokenSeq prompt;
  ScoredRun candidates;
};

const World& world() {
  static const World w = [] {
    World x;
    SyntheticConfig sc;
    sc.num_docs = 60;
    sc.num_queries = 30;
    sc.vocab_size = 80;
    sc.num_topics = 4;
    sc.negatives_per_query = 4;
    sc.min_doc_len = 12;
    sc.max_doc_len = 20;
    x.data = make_synthetic_dataset(sc, prompt_texts());
    x.lm_config.vocab_size = static_cast<int>(x.data.vocab.size());
    x.lm_config.model_dim = 8;
    x.lm_config.ffn_dim = 16;
    x.lm_config.max_seq_len = 64;
    x.lm_config.seed = 2;
    x.prompt = tokenize(prompt_preset("p4").text, x.data.vocab);
    x.candidates = retrieve(x.data.queries, InvertedIndex::build(x.data.corpus), 10);
    return x;
  }();
  return w;
}

MiniLM<double> frozen_lm() {
  MiniLM<double> lm(world().lm_config);
  lm.freeze();
  return lm;
}

bool same_bits(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("in-batch negatives") {
  SUBCASE("b = 1") {
    const std::vector<Instance> batch{instance(10, {20})};
    CHECK(build_in_batch_negatives(batch, 1) == std::vector<Triple>{{0, 10, 20}});
  }
  SUBCASE("b = 2 matches hand enumeration") {
    const std::vector<Instance> batch{instance(10, {20}), instance(11, {21})};
    const std::vector<Triple> expect{{0, 10, 11}, {0, 10, 20}, {0, 10, 21},
                                     {1, 11, 10}, {1, 11, 20}, {1, 11, 21}};
    CHECK(build_in_batch_negatives(batch, 1) == expect);
  }
  SUBCASE("sampled negatives never include a batch positive") {
    const std::vector<Instance> batch{instance(10, {11, 20}), instance(11, {10, 21})};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      for (const auto& t : build_in_batch_negatives(batch, seed)) CHECK(t.negative != t.positive);
      const auto triples = build_in_batch_negatives(batch, seed);
      CHECK(triples[1].negative == 20);
      CHECK(triples[2].negative == 21);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_in_batch_negatives(std::vector<Instance>{}, 1), ContractError);
    CHECK_THROWS_AS(build_in_batch_negatives(std::vector<Instance>{instance(1, {2}), instance(1, {3})}, 1),
                    ContractError);
    CHECK_THROWS_AS(build_in_batch_negatives(std::vector<Instance>{instance(1, {2}), instance(2, {1})}, 1),
                    ContractError);
  }
  SUBCASE("same seed, same triples") {
    std::vector<Instance> batch;
    for (std::size_t i = 0; i < 4; ++i) batch.push_back(instance(i, {10 + i, 20 + i, 30 + i}));
    CHECK(build_in_batch_negatives(batch, 9) == build_in_batch_negatives(batch, 9));
    Rng rng(9);
    CHECK(build_in_batch_negatives(batch, rng).size() == 28);
  }
}

TEST_CASE("hinge") {
  CHECK(hinge(-5.0, -7.0) == 0.0);
  CHECK(hinge(-7.0, -5.0) == 2.0);
  CHECK(hinge(-3.0, -3.0) == 0.0);
  CHECK(hinge_grad(-3.0, -3.0) == std::pair{0.0, 0.0});
  CHECK(hinge_grad(-7.0, -5.0) == std::pair{-1.0, 1.0});
}

TEST_CASE("assemble_input") {
  const MiniLM<double> lm = frozen_lm();
  const TokenSeq doc{10, 11, 12, 13, 14};
  const TokenSeq prompt{20, 21, 22, 23, 24, 25, 26, 27, 28};

  const auto upr = assemble_input(lm, doc, MatrixXd(0, 8), prompt, 3);
  CHECK(upr.prefix.rows() == 14);
  CHECK(same_bits(upr.prefix.bottomRows(9), lm.embed(prompt)));

  Rng rng(1);
  const MatrixXd hint = rng.normal_matrix<double>(10, 8, 1.0);
  const auto a = assemble_input(lm, doc, hint, prompt, 3);
  CHECK(a.prefix.rows() == 24);
  CHECK(same_bits(a.prefix.topRows(5), lm.embed(doc)));
  CHECK(same_bits(a.prefix.middleRows(5, 10), hint));
  CHECK(same_bits(a.prefix.bottomRows(9), lm.embed(prompt)));
  CHECK(a.hint_offset == 5);

  const TokenSeq long_doc(60, 15);
  const auto cut = assemble_input(lm, long_doc, hint, prompt, 5);
  CHECK(cut.prefix.rows() + 5 == 64);
  CHECK(cut.doc_tokens_dropped == 60 - 40);

  CHECK_THROWS_AS(assemble_input(lm, doc, rng.normal_matrix<double>(55, 8, 1.0), prompt, 3), LengthError);
}

TEST_CASE("pointwise loss") {
  SUBCASE("uniform LM") {
    LMConfig c = world().lm_config;
    c.vocab_size = 10;
    MiniLM<double> lm(c);
    lm.output_weight().value.setZero();
    lm.output_bias().value.setZero();
    lm.freeze();
    QDConfig qc;
    qc.model_dim = 8;
    QDModule<double> qd(qc, lm.embedding_table());
    QueryLikelihoodScorer<double> scorer(lm, &qd, TokenSeq{4, 5});
    const TokenSeq q{6, 7, 8};
    CHECK(std::abs(loss_point(scorer, q, TokenSeq{4, 9}) - 3.0 * std::log(10.0)) < 1e-12);
  }
  SUBCASE("decomposes into per-token terms") {
    const MiniLM<double> lm = frozen_lm();
    QDConfig qc;
    qc.model_dim = 8;
    const QDModule<double> qd(qc, lm.embedding_table());
    const QueryLikelihoodScorer<double> scorer(lm, &qd, world().prompt);
    const auto& inst = world().data.train.instances[0];
    const auto& doc = world().data.corpus.at(inst.positive).token_ids;
    const MatrixXd hint = qd.hint(inst.query_ids, doc, lm.embedding_table());
    const auto in = assemble_input(lm, doc, hint, world().prompt, inst.query_ids.size());
    double manual = 0.0;
    MatrixXd seq = in.prefix;
    for (TokenId t : inst.query_ids) {
      const MatrixXd logits = lm.forward(seq);
      manual += log_softmax_row(logits.row(seq.rows() - 1))(t);
      MatrixXd next(seq.rows() + 1, seq.cols());
      next << seq, lm.embed(TokenSeq{t});
      seq = next;
    }
    const double lp = loss_point(scorer, inst.query_ids, doc);
    CHECK(lp >= 0.0);
    CHECK(std::abs(lp + manual) < 1e-10);
  }
}

TEST_CASE("pairwise and total loss") {
  const MiniLM<double> lm = frozen_lm();
  QDConfig qc;
  qc.model_dim = 8;
  const QDModule<double> qd(qc, lm.embedding_table());
  const QueryLikelihoodScorer<double> scorer(lm, &qd, world().prompt);
  const auto& corpus = world().data.corpus;
  for (const auto& inst : world().data.train.instances) {
    const auto& q = inst.query_ids;
    const auto& pos = corpus.at(inst.positive).token_ids;
    const auto& neg = corpus.at(inst.negatives[0]).token_ids;
    const double ip = scorer.loglik(q, pos);
    const double in = scorer.loglik(q, neg);
    const double pair = loss_pair(scorer, q, pos, neg);
    const double total = loss_total(scorer, q, pos, neg);
    CHECK(pair == (in > ip ? in - ip : 0.0));
    CHECK(total >= loss_point(scorer, q, pos));
    if (pair == 0.0) CHECK(total == loss_point(scorer, q, pos));
    CHECK(pair == loss_pair(scorer, q, pos, neg));
  }
}

TEST_CASE("batch loss gradient matches finite differences") {
  const MiniLM<double> lm = frozen_lm();
  const auto& data = world().data;
  std::vector<Instance> batch(data.train.instances.begin(), data.train.instances.begin() + 3);
  const auto triples = build_in_batch_negatives(batch, 4);
  REQUIRE(triples.size() == 15);
  for (Variant v : {Variant::A, Variant::R}) {
    QDConfig qc;
    qc.variant = v;
    qc.model_dim = 8;
    qc.k = 5;
    QDModule<double> qd(qc, lm.embedding_table());
    // move away from the identity start so every path carries gradient
    Rng rng(5);
    for (auto* p : qd.parameters()) p->value += rng.normal_matrix<double>(p->value.rows(), p->value.cols(), 0.05);
    const auto report = check_qd_gradients(lm, qd, world().prompt, data.corpus, batch, triples, 200, 7, 1e-4);
    CAPTURE(to_string(v));
    CAPTURE(report.worst_tensor);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CHECK(report.coordinates == 200);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("batch loss is the mean of the per-triple totals") {
  const MiniLM<double> lm = frozen_lm();
  QDConfig qc;
  qc.model_dim = 8;
  const QDModule<double> qd(qc, lm.embedding_table());
  const QueryLikelihoodScorer<double> scorer(lm, &qd, world().prompt);
  const auto& data = world().data;
  std::vector<Instance> batch(data.train.instances.begin(), data.train.instances.begin() + 4);
  const auto triples = build_in_batch_negatives(batch, 2);
  const auto bl = batch_loss<double>(scorer, data.corpus, batch, triples);
  double manual = 0.0;
  for (const auto& t : triples) {
    manual += loss_total(scorer, batch[t.query].query_ids, data.corpus.at(t.positive).token_ids,
                         data.corpus.at(t.negative).token_ids);
  }
  CHECK(bl.triples == 28);
  CHECK(std::abs(bl.loss - manual / 28.0) < 1e-10);
  CHECK(std::abs(bl.loss - (bl.point + bl.pair)) < 1e-10);
}

TEST_CASE("checkpoint container") {
  MiniLM<double> lm = frozen_lm();
  save_lm(scratch("lm.ckpt").string(), lm);
  const MiniLM<double> back = load_lm(scratch("lm.ckpt").string());
  CHECK(back.config() == lm.config());
  CHECK(back.frozen());
  const auto a = lm.parameters();
  const auto b = back.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i]->value.cast<float>().cast<double>() - b[i]->value).cwiseAbs().maxCoeff() == 0.0);
  }

  QDConfig qc;
  qc.variant = Variant::R;
  qc.model_dim = 8;
  qc.k = 7;
  QDModule<double> qd(qc, lm.embedding_table());
  round_to_float(qd.parameters());
  save_qd(scratch("qd.ckpt").string(), qd, nlohmann::json{{"prompt", "p4"}});
  nlohmann::json extra;
  const auto qd_back = load_qd(scratch("qd.ckpt").string(), back.embedding_table(), &extra);
  CHECK(qd_back.config() == qd.config());
  CHECK(extra.at("prompt") == "p4");
  const auto pa = std::as_const(qd).parameters();
  const auto pb = qd_back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_bits(pa[i]->value, pb[i]->value));

  const std::string bytes = read_file(scratch("qd.ckpt"));
  CHECK(bytes.substr(0, 8) == "QPEFTCKP");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  CHECK(version == 1);

  std::ofstream(scratch("bad.ckpt"), std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  CHECK_THROWS_AS(read_container(scratch("bad.ckpt").string()), ParseError);
  std::ofstream(scratch("short.ckpt"), std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(read_container(scratch("short.ckpt").string()), ParseError);
}

TEST_CASE("training log csv round trip") {
  const std::vector<EpochLog> log{{0, std::nullopt, 0.25, 0.25}, {1, 12.5, 0.5, 0.5}, {2, 0.1 + 0.2, 0.4, 0.5}};
  const std::string csv = training_log_csv(log);
  CHECK(csv.rfind("epoch,train_loss,eval_R10,best_so_far\n0,NA,0.25,0.25\n", 0) == 0);
  CHECK(parse_training_log_csv(csv) == log);
  CHECK_THROWS_AS(parse_training_log_csv("epoch,loss\n"), ParseError);
}

TEST_CASE("train config") {
  const TrainConfig c;
  CHECK(c.batch_size == 4);
  CHECK(c.max_epochs == 20);
  CHECK(c.patience == 5);
  CHECK(c.lr == 3e-2);
  CHECK(c.prompt == "p4");
  CHECK(c.qd.k == 10);
  CHECK(c.qd.heads == 2);
  CHECK(c.qd.mlp_layers == 1);
  TrainConfig bad;
  bad.patience = 30;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("sample_instances") {
  const auto& train = world().data.train;
  CHECK(sample_instances(train, 0, 1, "train-sample").size() == train.instances.size());
  const auto a = sample_instances(train, 7, 1, "train-sample");
  CHECK(a.size() == 7);
  CHECK(a.front().query_id == sample_instances(train, 7, 1, "train-sample").front().query_id);
  CHECK_THROWS_AS(sample_instances(train, 1000, 1, "train-sample"), ContractError);
}

TEST_CASE("fit") {
  const MiniLM<double> lm = frozen_lm();
  const auto& w = world();
  Dataset train = w.data.train;
  candidate_negatives(train, w.candidates, w.data.corpus, w.data.qrels, 10);
  TrainConfig tc;
  tc.qd.model_dim = 8;
  tc.max_epochs = 2;
  tc.patience = 2;
  tc.rerank_depth = 10;
  tc.seed = 3;

  SUBCASE("zero epochs keeps the initialization and still evaluates") {
    TrainConfig zero = tc;
    zero.max_epochs = 0;
    const auto r = fit(lm, w.data.corpus, train, w.data.eval, w.candidates, w.data.qrels, w.prompt, zero);
    REQUIRE(r.log.size() == 1);
    CHECK(!r.log[0].train_loss);
    QDConfig qc = tc.qd;
    const QDModule<double> init(qc, lm.embedding_table());
    const auto pa = init.parameters();
    const auto pb = r.best.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_bits(pa[i]->value, pb[i]->value));
  }
  SUBCASE("deterministic, frozen LM untouched, trained tensors move") {
    const MiniLM<double> snapshot = lm;
    const auto r1 = fit(lm, w.data.corpus, train, w.data.eval, w.candidates, w.data.qrels, w.prompt, tc);
    const auto r2 = fit(lm, w.data.corpus, train, w.data.eval, w.candidates, w.data.qrels, w.prompt, tc);
    CHECK(r1.log == r2.log);
    CHECK(r1.log.size() == 3);
    save_qd(scratch("fit1.ckpt").string(), r1.last);
    save_qd(scratch("fit2.ckpt").string(), r2.last);
    CHECK(read_file(scratch("fit1.ckpt")) == read_file(scratch("fit2.ckpt")));

    const auto before = snapshot.parameters();
    const auto after = lm.parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(same_bits(before[i]->value, after[i]->value));

    QDConfig qc = tc.qd;
    const QDModule<double> init(qc, lm.embedding_table());
    const auto pi = init.parameters();
    const auto pl = r1.last.parameters();
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (r1.grad_mass[i] > 0.0) CHECK(!same_bits(pi[i]->value, pl[i]->value));
    }
    CHECK(same_bits(r1.last.f_embed().value.row(kPad), lm.embedding_table().row(kPad)));
  }
  SUBCASE("partial last batch is trained") {
    TrainConfig odd = tc;
    odd.train_size = 5;
    odd.max_epochs = 1;
    odd.patience = 1;
    const auto r = fit(lm, w.data.corpus, train, w.data.eval, w.candidates, w.data.qrels, w.prompt, odd);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log[1].train_loss.has_value());
  }
}
