#include "qpeft/trainer/losses.hpp"

#include <cmath>

namespace qpeft {

template <typename Scalar>
BatchLoss batch_loss(const QueryLikelihoodScorer<Scalar>& scorer, const Corpus& corpus,
                     std::span<const Instance> batch, std::span<const Triple> triples, GradSet<Scalar>* grads,
                     SelectionMap* pinned) {
  BatchLoss out;
  out.triples = triples.size();
  if (triples.empty()) return out;

  using Key = std::pair<std::size_t, std::size_t>;
  std::map<Key, double> value;
  std::map<Key, double> coef;
  for (const auto& t : triples) {
    value.emplace(Key{t.query, t.positive}, 0.0);
    value.emplace(Key{t.query, t.negative}, 0.0);
  }

  auto selection_for = [&](const Key& key) -> const TokenSeq* {
    if (!pinned) return nullptr;
    auto it = pinned->find(key);
    return it == pinned->end() ? nullptr : &it->second;
  };

  for (auto& [key, v] : value) {
    const auto& q = batch[key.first].query_ids;
    const auto& d = corpus.at(key.second).token_ids;
    if (pinned && !selection_for(key)) {
      TokenSeq sel;
      v = static_cast<double>(scorer.loglik(q, d, nullptr, &sel));
      (*pinned)[key] = std::move(sel);
    } else {
      v = static_cast<double>(scorer.loglik(q, d, selection_for(key)));
    }
    if (!std::isfinite(v)) throw NumericError("batch_loss: non-finite log-likelihood for query " + batch[key.first].query_id);
  }

  const double inv = 1.0 / static_cast<double>(triples.size());
  for (const auto& t : triples) {
    const double ip = value.at({t.query, t.positive});
    const double in = value.at({t.query, t.negative});
    const double h = hinge(ip, in);
    out.point += -ip * inv;
    out.pair += h * inv;
    const auto [gp, gn] = hinge_grad(ip, in);
    if (gn != 0.0) ++out.active;
    coef[{t.query, t.positive}] += (-1.0 + gp) * inv;
    coef[{t.query, t.negative}] += gn * inv;
  }
  out.loss = out.point + out.pair;

  if (grads) {
    for (const auto& [key, c] : coef) {
      if (c == 0.0) continue;
      scorer.loglik_with_grad(batch[key.first].query_ids, corpus.at(key.second).token_ids, static_cast<Scalar>(c),
                              *grads, selection_for(key));
    }
  }
  return out;
}

template BatchLoss batch_loss<double>(const QueryLikelihoodScorer<double>&, const Corpus&, std::span<const Instance>,
                                      std::span<const Triple>, GradSet<double>*, SelectionMap*);
template BatchLoss batch_loss<float>(const QueryLikelihoodScorer<float>&, const Corpus&, std::span<const Instance>,
                                     std::span<const Triple>, GradSet<float>*, SelectionMap*);

}  // namespace qpeft
