#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "qpeft/evalrank/scoring.hpp"
#include "qpeft/trainer/batching.hpp"

namespace qpeft {

/// max(0, I_neg - I_pos). Exactly 0 whenever i_pos >= i_neg.
inline double hinge(double i_pos, double i_neg) { return i_neg > i_pos ? i_neg - i_pos : 0.0; }

/// d hinge / d(i_pos, i_neg); both 0 on the closed region i_pos >= i_neg.
inline std::pair<double, double> hinge_grad(double i_pos, double i_neg) {
  return i_neg > i_pos ? std::pair{-1.0, 1.0} : std::pair{0.0, 0.0};
}

template <typename Scalar>
Scalar loss_point(const QueryLikelihoodScorer<Scalar>& scorer, std::span<const TokenId> query,
                  std::span<const TokenId> positive) {
  return -scorer.loglik(query, positive);
}

template <typename Scalar>
Scalar loss_pair(const QueryLikelihoodScorer<Scalar>& scorer, std::span<const TokenId> query,
                 std::span<const TokenId> positive, std::span<const TokenId> negative) {
  return static_cast<Scalar>(hinge(scorer.loglik(query, positive), scorer.loglik(query, negative)));
}

template <typename Scalar>
Scalar loss_total(const QueryLikelihoodScorer<Scalar>& scorer, std::span<const TokenId> query,
                  std::span<const TokenId> positive, std::span<const TokenId> negative) {
  const Scalar ip = scorer.loglik(query, positive);
  const Scalar in = scorer.loglik(query, negative);
  return -ip + static_cast<Scalar>(hinge(ip, in));
}

/// R-variant selections pinned per (batch query, corpus doc).
using SelectionMap = std::map<std::pair<std::size_t, std::size_t>, TokenSeq>;

struct BatchLoss {
  double loss = 0.0;        // mean total loss over triples
  double point = 0.0;       // mean pointwise part
  double pair = 0.0;        // mean pairwise part
  std::size_t triples = 0;
  std::size_t active = 0;   // triples with a positive hinge
};

/// Mean of loss_total over `triples`. Each distinct (query, doc) pair is
/// scored once. With `grads`, adds d(mean loss)/d(theta) aligned with the
/// scorer's QD parameters. With `pinned`, R selections are read from the map
/// when present and recorded otherwise.
template <typename Scalar>
BatchLoss batch_loss(const QueryLikelihoodScorer<Scalar>& scorer, const Corpus& corpus,
                     std::span<const Instance> batch, std::span<const Triple> triples,
                     GradSet<Scalar>* grads = nullptr, SelectionMap* pinned = nullptr);

extern template BatchLoss batch_loss<double>(const QueryLikelihoodScorer<double>&, const Corpus&,
                                             std::span<const Instance>, std::span<const Triple>,
                                             GradSet<double>*, SelectionMap*);
extern template BatchLoss batch_loss<float>(const QueryLikelihoodScorer<float>&, const Corpus&,
                                            std::span<const Instance>, std::span<const Triple>,
                                            GradSet<float>*, SelectionMap*);

}  // namespace qpeft
