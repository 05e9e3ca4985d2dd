#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <utility>

#include "qpeft/numcore/gradcheck.hpp"
#include "qpeft/numcore/rng.hpp"
#include "qpeft/qd/qd_module.hpp"

using namespace qpeft;

namespace {

constexpr int kVocab = 40;
constexpr int kDim = 8;

MatrixXd table(std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix<double>(kVocab, kDim, 1.0);
}

QDConfig config(Variant v, int mlp_layers = 1, int heads = 2) {
  QDConfig c;
  c.variant = v;
  c.model_dim = kDim;
  c.mlp_layers = mlp_layers;
  c.heads = heads;
  c.k = 4;
  c.seed = 3;
  return c;
}

TokenSeq random_ids(Rng& rng, std::size_t n, int lo = 4, int hi = kVocab) {
  TokenSeq s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(lo + static_cast<TokenId>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo))));
  return s;
}

// Exhaustive scoring of every (query row, document column) pair.
TokenSeq brute_force_topk(const MatrixXd& f, const MatrixXd& e, const TokenSeq& q, const TokenSeq& doc, int k) {
  std::vector<std::pair<double, TokenId>> scored;
  for (TokenId t : std::set<TokenId>(doc.begin(), doc.end())) {
    double best = -2.0;
    for (TokenId qi : q) {
      for (TokenId dj : doc) {
        if (dj != t) continue;
        const double nq = f.row(qi).norm();
        const double nd = e.row(dj).norm();
        const double c = nq > 0 && nd > 0 ? f.row(qi).dot(e.row(dj)) / (nq * nd) : 0.0;
        best = std::max(best, c);
      }
    }
    scored.emplace_back(best, t);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  TokenSeq out;
  for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < k; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

TEST_CASE("cosine_matrix") {
  MatrixXd f = table(1);
  MatrixXd e = f;
  const TokenSeq q{5, 6};
  const TokenSeq d{5, 7};
  const MatrixXd c = cosine_matrix<double>(q, d, f, e);
  CHECK(std::abs(c(0, 0) - 1.0) < 1e-6);

  f.row(6).setZero();
  f(6, 0) = 1.0;
  e.row(7).setZero();
  e(7, 1) = 1.0;
  CHECK(cosine_matrix<double>(q, d, f, e)(1, 1) == 0.0);

  MatrixXd g = table(1);
  const MatrixXd before = cosine_matrix<double>(q, d, g, e);
  g.row(5) *= 3.7;
  const MatrixXd after = cosine_matrix<double>(q, d, g, e);
  CHECK((before.row(0) - after.row(0)).cwiseAbs().maxCoeff() < 1e-6);

  g.row(6).setZero();
  CHECK(cosine_matrix<double>(q, d, g, e).row(1).isZero(0.0));
}

TEST_CASE("topk_unique") {
  const TokenSeq doc{9, 8, 9};
  MatrixXd cos(1, 3);
  cos << 0.2, 0.5, 0.9;
  CHECK(topk_unique<double>(cos, doc, 10) == TokenSeq{9, 8});
  CHECK(topk_unique<double>(MatrixXd::Constant(2, 3, 0.3), TokenSeq{12, 5, 7}, 10) == TokenSeq{5, 7, 12});
  CHECK(topk_unique<double>(MatrixXd::Constant(2, 3, 0.3), TokenSeq{12, 5, 7}, 2) == TokenSeq{5, 7});

  Rng rng(8);
  const MatrixXd f = table(2);
  const MatrixXd e = table(3);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenSeq q = random_ids(rng, 6);
    const TokenSeq d = random_ids(rng, 40);
    CHECK(topk_unique(cosine_matrix<double>(q, d, f, e), d, 5) == brute_force_topk(f, e, q, d, 5));
  }
}

TEST_CASE("mlp_apply") {
  Rng rng(4);
  const MatrixXd x = rng.normal_matrix<double>(3, kDim, 1.0);
  CHECK(mlp_apply<double>(x, {}) == x);

  std::vector<MlpLayer<double>> identity{{ParamTensor<double>("w", MatrixXd::Identity(kDim, kDim)),
                                          ParamTensor<double>("b", MatrixXd::Zero(1, kDim))}};
  CHECK(mlp_apply(x, identity) == x);

  std::vector<MlpLayer<double>> one{{ParamTensor<double>("w", rng.normal_matrix<double>(kDim, kDim, 1.0)),
                                     ParamTensor<double>("b", rng.normal_matrix<double>(1, kDim, 1.0))}};
  const MatrixXd y = mlp_apply(x, one);
  for (int r = 0; r < 3; ++r) {
    for (int j = 0; j < kDim; ++j) {
      double acc = one[0].bias.value(0, j);
      for (int i = 0; i < kDim; ++i) acc += x(r, i) * one[0].weight.value(i, j);
      CHECK(std::abs(y(r, j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("f_embed starts as a bitwise copy of the frozen table") {
  const MatrixXd e = table(5);
  for (Variant v : {Variant::R, Variant::A}) {
    QDModule<double> qd(config(v), e);
    CHECK(std::memcmp(qd.f_embed().value.data(), e.data(), sizeof(double) * e.size()) == 0);
    for (const auto* p : std::as_const(qd).parameters()) CHECK(p->trainable);
  }
}

TEST_CASE("variant R hint") {
  const MatrixXd e = table(6);
  QDModule<double> qd(config(Variant::R, 0), e);
  Rng rng(2);
  for (int t = 0; t < kVocab; ++t) qd.f_embed().value.row(t) += rng.normal_matrix<double>(1, kDim, 0.1);

  const TokenSeq q{5, 9};
  SUBCASE("zero MLP layers passes f_embed rows through") {
    const TokenSeq sel{11};
    const MatrixXd h = qd.hint(q, TokenSeq{11, 12}, e, nullptr, &sel);
    REQUIRE(h.rows() == 1);
    CHECK(h.row(0) == qd.f_embed().value.row(11));
  }
  SUBCASE("short documents give short hints; duplicates change nothing") {
    const TokenSeq doc{20, 21, 20};
    CHECK(qd.hint(q, doc, e).rows() == 2);
    const TokenSeq dup{20, 21, 20, 21, 21};
    CHECK(qd.hint(q, doc, e) == qd.hint(q, dup, e));
    CHECK(qd.hint(q, TokenSeq{}, e).rows() == 0);
  }
  SUBCASE("hint equals the MLP of the brute-force selection") {
    QDModule<double> with_mlp(config(Variant::R, 1), e);
    const TokenSeq doc = random_ids(rng, 30);
    const TokenSeq sel = brute_force_topk(with_mlp.f_embed().value, e, q, doc, 4);
    MatrixXd rows(static_cast<Eigen::Index>(sel.size()), kDim);
    for (std::size_t i = 0; i < sel.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = with_mlp.f_embed().value.row(sel[i]);
    const MatrixXd h = with_mlp.hint(q, doc, e);
    CHECK((h - mlp_apply(rows, with_mlp.mlp())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(h.rows() <= 4);
  }
}

TEST_CASE("variant A hint") {
  const MatrixXd e = table(7);
  Rng rng(3);

  SUBCASE("shape is |q| x d for any document length") {
    QDModule<double> qd(config(Variant::A), e);
    for (std::size_t n : {1u, 3u, 17u}) {
      const MatrixXd h = qd.hint(random_ids(rng, 5), random_ids(rng, n), e);
      CHECK(h.rows() == 5);
      CHECK(h.cols() == kDim);
    }
    CHECK_THROWS(qd.hint(TokenSeq{5}, TokenSeq{}, e));
  }
  SUBCASE("document permutation invariance") {
    QDModule<double> qd(config(Variant::A), e);
    const TokenSeq q = random_ids(rng, 4);
    TokenSeq d = random_ids(rng, 12);
    const MatrixXd before = qd.hint(q, d, e);
    std::reverse(d.begin(), d.end());
    std::swap(d[0], d[5]);
    CHECK((before - qd.hint(q, d, e)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("one key: every row is W_O applied to that value, then the MLP") {
    QDModule<double> qd(config(Variant::A), e);
    const MatrixXd h = qd.hint(TokenSeq{5, 6, 7}, TokenSeq{13}, e);
    const MatrixXd v = e.row(13) * qd.w_v().value;
    const MatrixXd expect = mlp_apply(MatrixXd(v * qd.w_o().value), qd.mlp());
    for (int r = 0; r < 3; ++r) CHECK((h.row(r) - expect.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("single head matches a dense computation") {
    QDModule<double> qd(config(Variant::A, 1, 1), e);
    const TokenSeq q{5, 8, 30};
    const TokenSeq d{4, 9, 9, 22, 35};
    MatrixXd xq(3, kDim), xd(5, kDim);
    for (int i = 0; i < 3; ++i) xq.row(i) = qd.f_embed().value.row(q[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 5; ++j) xd.row(j) = e.row(d[static_cast<std::size_t>(j)]);
    const MatrixXd Q = xq * qd.w_q().value;
    const MatrixXd K = xd * qd.w_k().value;
    const MatrixXd V = xd * qd.w_v().value;
    MatrixXd s = Q * K.transpose() / std::sqrt(static_cast<double>(kDim));
    for (int i = 0; i < 3; ++i) {
      const double z = s.row(i).array().exp().sum();
      s.row(i) = (s.row(i).array().exp() / z).matrix();
    }
    const MatrixXd expect = mlp_apply(MatrixXd(s * V * qd.w_o().value), qd.mlp());
    CHECK((qd.hint(q, d, e) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hint backward matches finite differences") {
  const MatrixXd e = table(9);
  Rng rng(6);
  for (Variant v : {Variant::R, Variant::A}) {
    for (int layers : {0, 1, 2}) {
      CAPTURE(layers);
      QDModule<double> qd(config(v, layers), e);
      const TokenSeq q = random_ids(rng, 4);
      const TokenSeq d = random_ids(rng, 10);
      TokenSeq selection;
      QDModule<double>::Cache probe;
      qd.hint(q, d, e, &probe);
      selection = probe.selected;
      const MatrixXd w = rng.normal_matrix<double>(v == Variant::A ? 4 : static_cast<Eigen::Index>(selection.size()), kDim, 1.0);
      const auto params = qd.parameters();
      const LossFn loss = [&](bool with_grad) {
        QDModule<double>::Cache cache;
        const MatrixXd h = qd.hint(q, d, e, &cache, v == Variant::R ? &selection : nullptr);
        const double value = (h.array() * w.array()).sum();
        if (with_grad) {
          GradSet<double> g = zeros_like(params);
          qd.backward(cache, w, g);
          accumulate(params, g);
        }
        return value;
      };
      CHECK(finite_diff_check(params, loss, 1e-3, 150, 4).max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("variant R gradient is zero outside selected rows") {
  const MatrixXd e = table(10);
  QDModule<double> qd(config(Variant::R, 1), e);
  const TokenSeq q{5, 6};
  const TokenSeq d{10, 11, 12, 13, 14, 15, 16};
  QDModule<double>::Cache cache;
  const MatrixXd h = qd.hint(q, d, e, &cache);
  GradSet<double> g = zeros_like(qd.parameters());
  qd.backward(cache, MatrixXd::Ones(h.rows(), h.cols()), g);
  const std::set<TokenId> chosen(cache.selected.begin(), cache.selected.end());
  for (TokenId t = 0; t < kVocab; ++t) {
    if (chosen.count(t) == 0) CHECK(g[0].row(t).isZero(0.0));
  }
}

TEST_CASE("config validation") {
  QDConfig c = config(Variant::A);
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = config(Variant::R);
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = config(Variant::R, 3);
  CHECK_THROWS_AS(c.validate(), ContractError);
  CHECK(parse_variant("A") == Variant::A);
  CHECK_THROWS_AS(parse_variant("b"), ContractError);
}
