#include <doctest.h>

#include <cmath>
#include <cstring>
#include <utility>

#include "qpeft/minilm/loglik.hpp"
#include "qpeft/minilm/minilm.hpp"
#include "qpeft/minilm/pretrain.hpp"
#include "qpeft/numcore/gradcheck.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/textdata/synthetic.hpp"

using namespace qpeft;

namespace {

LMConfig small_config(int vocab = 12) {
  LMConfig c;
  c.vocab_size = vocab;
  c.model_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_dim = 16;
  c.max_seq_len = 32;
  c.seed = 5;
  return c;
}

bool bitwise_equal(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// One block, d = 2, V = 2, one head, weights set by hand.
MiniLM<double> hand_built() {
  LMConfig c;
  c.vocab_size = 2;
  c.model_dim = 2;
  c.layers = 1;
  c.heads = 1;
  c.ffn_dim = 2;
  c.max_seq_len = 4;
  MiniLM<double> lm(c);
  const std::vector<std::vector<double>> values{
      {0.5, -0.3, 0.2, 0.8},                       // tok_embed
      {0.1, 0.0, 0.0, 0.1, -0.1, 0.05, 0.0, 0.0},  // pos_embed
      {1.0, 0.9},          {0.05, -0.02},          // ln1
      {0.3, -0.2, 0.1, 0.4}, {0.01, 0.02},         // w_q, b_q
      {-0.1, 0.5, 0.2, 0.3}, {0.0, 0.03},          // w_k, b_k
      {0.7, 0.1, -0.3, 0.2}, {0.02, 0.0},          // w_v, b_v
      {0.4, 0.0, 0.1, -0.5}, {0.0, 0.01},          // w_o, b_o
      {1.1, 1.0},          {0.0, 0.1},             // ln2
      {0.6, -0.4, 0.2, 0.3}, {0.05, -0.05},        // w_ff1, b_ff1
      {0.3, 0.2, -0.1, 0.4}, {0.01, 0.0},          // w_ff2, b_ff2
      {0.9, 1.2},          {0.1, -0.1},            // final norm
      {1.0, -0.5, 0.3, 0.7}, {0.2, -0.1},          // w_out, b_out
  };
  auto params = lm.parameters();
  REQUIRE(params.size() == values.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(static_cast<std::size_t>(params[i]->value.size()) == values[i].size());
    std::copy(values[i].begin(), values[i].end(), params[i]->value.data());
  }
  return lm;
}

}  // namespace

TEST_CASE("embed") {
  MiniLM<double> lm(small_config());
  CHECK(lm.embed(TokenSeq{}).rows() == 0);
  CHECK(lm.embed(TokenSeq{}).cols() == 8);
  const MatrixXd e = lm.embed(TokenSeq{4, 4, 7});
  CHECK(bitwise_equal(e.row(0), e.row(1)));
  CHECK(bitwise_equal(e.row(2), lm.embedding_table().row(7)));
  CHECK_THROWS_AS(lm.embed(TokenSeq{12}), ContractError);
}

TEST_CASE("hand-built forward pass") {
  const MiniLM<double> lm = hand_built();
  const MatrixXd logits = lm.forward(lm.embed(TokenSeq{0, 1, 1}));
  const double ref[3][2] = {{0.8099943877775024, -1.5099865930240337},
                            {-0.26998724707554766, 1.0699695346804743},
                            {-0.2699908544792612, 1.0699781523671241}};
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < 2; ++j) CHECK(std::abs(logits(t, j) - ref[t][j]) < 1e-10);
  }
}

TEST_CASE("continuation log-likelihood decomposes per token") {
  const MiniLM<double> lm = hand_built();
  const TokenSeq targets{1, 0};
  const double total = continuation_loglik(lm, lm.embed(TokenSeq{0}), std::span<const TokenId>(targets));
  CHECK(std::abs(total - -3.986263377552715) < 1e-10);

  const RowVector<double> l1 = log_softmax_row(lm.forward(lm.embed(TokenSeq{0})).row(0));
  const RowVector<double> l2 = log_softmax_row(lm.forward(lm.embed(TokenSeq{0, 1})).row(1));
  CHECK(std::abs(total - (l1(1) + l2(0))) < 1e-12);
  CHECK(continuation_loglik(lm, lm.embed(TokenSeq{0}), std::span<const TokenId>()) == 0.0);
}

TEST_CASE("forward respects the causal mask") {
  MiniLM<double> lm(small_config());
  Rng rng(1);
  MatrixXd x = rng.normal_matrix<double>(10, 8, 1.0);
  const MatrixXd before = lm.forward(x);
  x.bottomRows(4) = rng.normal_matrix<double>(4, 8, 1.0);
  const MatrixXd after = lm.forward(x);
  CHECK(bitwise_equal(before.topRows(6), after.topRows(6)));
  CHECK(!before.bottomRows(4).isApprox(after.bottomRows(4)));
}

TEST_CASE("appending rows after the last target never changes the log-likelihood") {
  MiniLM<double> lm(small_config());
  Rng rng(2);
  const MatrixXd prefix = rng.normal_matrix<double>(5, 8, 1.0);
  const TokenSeq q{4, 9, 6};
  const double base = continuation_loglik(lm, prefix, std::span<const TokenId>(q));
  const MatrixXd input = continuation_input(lm, prefix, std::span<const TokenId>(q));
  MatrixXd longer(input.rows() + 3, 8);
  longer << input, rng.normal_matrix<double>(3, 8, 1.0);
  const MatrixXd logits = lm.forward(longer);
  double manual = 0.0;
  for (int l = 0; l < 3; ++l) manual += log_softmax_row(logits.row(4 + l))(q[static_cast<std::size_t>(l)]);
  CHECK(std::abs(base - manual) < 1e-12);

  MatrixXd swapped = prefix;
  swapped.row(0).swap(swapped.row(3));
  CHECK(continuation_loglik(lm, swapped, std::span<const TokenId>(q)) != base);
}

TEST_CASE("uniform logits") {
  MiniLM<double> lm(small_config(10));
  lm.output_weight().value.setZero();
  lm.output_bias().value.setZero();
  const MatrixXd logits = lm.forward(lm.embed(TokenSeq{4, 5, 6}));
  CHECK(logits.isZero(0.0));
  const TokenSeq q{7, 8, 9};
  const double ll = continuation_loglik(lm, lm.embed(TokenSeq{4, 5}), std::span<const TokenId>(q));
  CHECK(std::abs(ll - 3.0 * std::log(0.1)) < 1e-12);
  CHECK(std::abs(ll - -6.907755278982137) < 1e-9);
}

TEST_CASE("sequence length limit") {
  MiniLM<double> lm(small_config());
  Rng rng(0);
  CHECK_THROWS_AS(lm.forward(rng.normal_matrix<double>(33, 8, 1.0)), LengthError);
  const TokenSeq q(5, 4);
  CHECK_THROWS_AS(continuation_loglik(lm, rng.normal_matrix<double>(28, 8, 1.0), std::span<const TokenId>(q)),
                  LengthError);
}

TEST_CASE("log-likelihood gradients match finite differences for every LM tensor") {
  MiniLM<double> lm(small_config());
  const TokenSeq prefix_ids{5, 6, 7};
  const TokenSeq targets{8, 4, 11, 6};
  const LossFn loss = [&](bool with_grad) {
    const MatrixXd prefix = lm.embed(prefix_ids);
    if (!with_grad) return -continuation_loglik(lm, prefix, std::span<const TokenId>(targets));
    const auto g = continuation_loglik_train(lm, prefix, std::span<const TokenId>(targets), -1.0);
    TokenSeq inputs = prefix_ids;
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
    lm.scatter_embedding_grad(inputs, g.d_input);
    return -g.value;
  };
  // Key biases shift every attention logit of a row equally, so their true
  // gradient is zero and only rounding noise is left to compare.
  std::vector<ParamTensor<double>*> checked;
  for (auto* p : lm.parameters()) {
    if (p->name.ends_with("b_k")) continue;
    checked.push_back(p);
  }
  const auto report = finite_diff_check(checked, loss, 1e-4, 300, 17);
  for (auto* p : lm.parameters()) p->grad.setZero();
  loss(true);
  for (auto& blk : lm.blocks()) CHECK(blk.b_k.grad.cwiseAbs().maxCoeff() < 1e-12);
  CAPTURE(report.worst_tensor);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.coordinates == 300);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("input gradient of the log-likelihood") {
  MiniLM<double> lm(small_config());
  lm.freeze();
  Rng rng(4);
  ParamTensor<double> prefix("prefix", rng.normal_matrix<double>(4, 8, 1.0));
  const TokenSeq targets{5, 9, 3};
  const LossFn loss = [&](bool with_grad) {
    if (!with_grad) return continuation_loglik(lm, prefix.value, std::span<const TokenId>(targets));
    const auto g = continuation_loglik_grad(lm, prefix.value, std::span<const TokenId>(targets), 1.0);
    prefix.accumulate(g.d_input.topRows(g.prefix_rows));
    return g.value;
  };
  // central differences carry O(eps^2) error, visible on the smallest coordinates
  CHECK(finite_diff_check({&prefix}, loss, 1e-5, 32, 3).max_rel_error < 1e-4);
  for (const auto* p : std::as_const(lm).parameters()) CHECK(p->grad.isZero(0.0));
}

TEST_CASE("pretraining") {
  const LMConfig config = small_config();
  const std::vector<TokenSeq> seqs{{4, 5, 6, 7}, {8, 9, 10, 11, 4}};

  SUBCASE("zero steps keeps the seeded initialization") {
    const MiniLM<double> init(config);
    const auto lm = pretrain_lm<double>(seqs, config, PretrainConfig{0, 4, 1e-2, 0});
    const auto a = init.parameters();
    const auto b = lm.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i]->value, b[i]->value));
    CHECK(lm.frozen());
  }
  SUBCASE("same seed gives bit-identical weights") {
    const PretrainConfig pc{20, 2, 1e-2, 3};
    const auto a = pretrain_lm<double>(seqs, config, pc);
    const auto b = pretrain_lm<double>(seqs, config, pc);
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(pa[i]->value, pb[i]->value));
  }
  SUBCASE("negative steps are rejected") {
    CHECK_THROWS_AS(pretrain_lm<double>(seqs, config, PretrainConfig{-1, 1, 1e-2, 0}), ContractError);
  }
}

TEST_CASE("pretraining beats the unigram model on a small synthetic corpus") {
  SyntheticConfig sc;
  sc.num_docs = 50;
  sc.num_queries = 30;
  const auto data = make_synthetic_dataset(sc);
  std::vector<TokenSeq> docs;
  for (const auto& d : data.corpus.docs()) docs.push_back(d.token_ids);
  LMConfig lc;
  lc.vocab_size = data.vocab.size();
  const auto lm = pretrain_lm<float>(docs, lc, PretrainConfig{2000, 8, 5e-3, 0});
  const double ppl = perplexity(lm, docs);
  const double uni = unigram_perplexity(docs);
  MESSAGE("perplexity " << ppl << " vs unigram " << uni);
  CHECK(ppl < uni);
}

TEST_CASE("frozen model rejects parameter gradients") {
  MiniLM<double> lm(small_config());
  lm.freeze();
  CHECK(lm.frozen());
  const TokenSeq q{4, 5};
  CHECK_THROWS_AS(lm.scatter_embedding_grad(q, MatrixXd::Ones(2, 8)), ContractError);
  const auto before = lm.output_weight().value;
  continuation_loglik_train(lm, lm.embed(TokenSeq{6}), std::span<const TokenId>(q), 1.0);
  CHECK(bitwise_equal(before, lm.output_weight().value));
  for (const auto* p : std::as_const(lm).parameters()) CHECK(p->grad.isZero(0.0));
}
