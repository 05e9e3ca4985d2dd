#include "qpeft/evalrank/scoring.hpp"

#include "qpeft/minilm/loglik.hpp"

namespace qpeft {

std::string to_string(ScoreMode m) { return m == ScoreMode::Sum ? "sum" : "mean"; }

ScoreMode parse_score_mode(const std::string& s) {
  if (s == "sum") return ScoreMode::Sum;
  if (s == "mean") return ScoreMode::Mean;
  throw ContractError("unknown score mode '" + s + "' (expected sum or mean)");
}

template <typename Scalar>
QueryLikelihoodScorer<Scalar>::QueryLikelihoodScorer(const MiniLM<Scalar>& lm, const QDModule<Scalar>* qd,
                                                     TokenSeq prompt_ids, ScoreMode mode,
                                                     std::optional<Exemplar> exemplar)
    : lm_(lm), qd_(qd), prompt_(std::move(prompt_ids)), mode_(mode), exemplar_(std::move(exemplar)) {
  if (qd_ && qd_->config().model_dim != lm_.dim()) throw DimensionError("scorer: QD width != LM width");
}

template <typename Scalar>
auto QueryLikelihoodScorer<Scalar>::leading_block(std::size_t) const -> Mat {
  if (!exemplar_) return Mat(0, lm_.dim());
  const auto& ex = *exemplar_;
  const Eigen::Index a = static_cast<Eigen::Index>(ex.doc_ids.size());
  const Eigen::Index b = static_cast<Eigen::Index>(prompt_.size());
  const Eigen::Index c = static_cast<Eigen::Index>(ex.query_ids.size());
  Mat block(a + b + c, lm_.dim());
  if (a) block.topRows(a) = lm_.embed(ex.doc_ids);
  if (b) block.middleRows(a, b) = lm_.embed(prompt_);
  if (c) block.bottomRows(c) = lm_.embed(ex.query_ids);
  return block;
}

template <typename Scalar>
Scalar QueryLikelihoodScorer<Scalar>::loglik(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                                             const TokenSeq* fixed_selection, TokenSeq* selection_out) const {
  typename QDModule<Scalar>::Cache cache;
  const Mat hint = qd_ ? qd_->hint(query_ids, doc_ids, lm_.embedding_table(), selection_out ? &cache : nullptr,
                                   fixed_selection)
                       : Mat(0, lm_.dim());
  if (selection_out) *selection_out = cache.selected;
  const auto in = assemble_input(lm_, doc_ids, hint, prompt_, query_ids.size(), leading_block(query_ids.size()));
  if (in.doc_tokens_dropped) ++truncations_;
  return continuation_loglik(lm_, in.prefix, query_ids);
}

template <typename Scalar>
Scalar QueryLikelihoodScorer<Scalar>::score(std::span<const TokenId> query_ids,
                                            std::span<const TokenId> doc_ids) const {
  const Scalar ll = loglik(query_ids, doc_ids);
  if (mode_ == ScoreMode::Mean && !query_ids.empty()) return ll / static_cast<Scalar>(query_ids.size());
  return ll;
}

template <typename Scalar>
Scalar QueryLikelihoodScorer<Scalar>::loglik_with_grad(std::span<const TokenId> query_ids,
                                                       std::span<const TokenId> doc_ids, Scalar coefficient,
                                                       GradSet<Scalar>& grads, const TokenSeq* fixed_selection,
                                                       TokenSeq* selection_out) const {
  typename QDModule<Scalar>::Cache cache;
  const Mat hint = qd_ ? qd_->hint(query_ids, doc_ids, lm_.embedding_table(), &cache, fixed_selection)
                       : Mat(0, lm_.dim());
  if (selection_out) *selection_out = cache.selected;
  const auto in = assemble_input(lm_, doc_ids, hint, prompt_, query_ids.size(), leading_block(query_ids.size()));
  if (in.doc_tokens_dropped) ++truncations_;
  auto g = continuation_loglik_grad(lm_, in.prefix, query_ids, coefficient);
  if (qd_ && in.hint_rows > 0) {
    // prefix rows map one-to-one onto input rows whenever the prefix is non-empty
    qd_->backward(cache, g.d_input.middleRows(in.hint_offset, in.hint_rows), grads);
  }
  return g.value;
}

template <typename Scalar>
Scalar score_qpeft(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                   std::span<const TokenId> prompt_ids, const QDModule<Scalar>& qd,
                   const MiniLM<Scalar>& lm, ScoreMode mode) {
  QueryLikelihoodScorer<Scalar> s(lm, &qd, TokenSeq(prompt_ids.begin(), prompt_ids.end()), mode);
  return s.score(query_ids, doc_ids);
}

template <typename Scalar>
Scalar score_upr(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                 std::span<const TokenId> prompt_ids, const MiniLM<Scalar>& lm, ScoreMode mode,
                 const std::optional<Exemplar>& exemplar) {
  QueryLikelihoodScorer<Scalar> s(lm, nullptr, TokenSeq(prompt_ids.begin(), prompt_ids.end()), mode, exemplar);
  return s.score(query_ids, doc_ids);
}

template class QueryLikelihoodScorer<double>;
template class QueryLikelihoodScorer<float>;
template double score_qpeft(std::span<const TokenId>, std::span<const TokenId>, std::span<const TokenId>,
                            const QDModule<double>&, const MiniLM<double>&, ScoreMode);
template float score_qpeft(std::span<const TokenId>, std::span<const TokenId>, std::span<const TokenId>,
                           const QDModule<float>&, const MiniLM<float>&, ScoreMode);
template double score_upr(std::span<const TokenId>, std::span<const TokenId>, std::span<const TokenId>,
                          const MiniLM<double>&, ScoreMode, const std::optional<Exemplar>&);
template float score_upr(std::span<const TokenId>, std::span<const TokenId>, std::span<const TokenId>,
                         const MiniLM<float>&, ScoreMode, const std::optional<Exemplar>&);

}  // namespace qpeft
