#pragma once

#include <atomic>
#include <optional>
#include <span>
#include <string>

#include "qpeft/minilm/minilm.hpp"
#include "qpeft/qd/qd_module.hpp"
#include "qpeft/trainer/assemble.hpp"

namespace qpeft {

/// Sum is the log-likelihood itself; mean divides by |q|.
enum class ScoreMode { Sum, Mean };

std::string to_string(ScoreMode m);
ScoreMode parse_score_mode(const std::string& s);

/// An in-context example (q*, d*) placed before the scored document.
struct Exemplar {
  TokenSeq query_ids;
  TokenSeq doc_ids;
};

/// Query-likelihood scorer: I(q | d, s) under the frozen LM, with a hint
/// from `qd` (or no hint when `qd` is null, which is UPR).
template <typename Scalar>
class QueryLikelihoodScorer {
public:
  using Mat = Matrix<Scalar>;

  QueryLikelihoodScorer(const MiniLM<Scalar>& lm, const QDModule<Scalar>* qd, TokenSeq prompt_ids,
                        ScoreMode mode = ScoreMode::Sum, std::optional<Exemplar> exemplar = std::nullopt);

  /// Relevance score in the configured mode.
  Scalar score(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids) const;

  /// Summed log-likelihood I(q | d, s). The selection arguments behave as in
  /// loglik_with_grad.
  Scalar loglik(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                const TokenSeq* fixed_selection = nullptr, TokenSeq* selection_out = nullptr) const;

  /// I(q | d, s); adds coefficient * dI/dtheta into `grads` (aligned with
  /// qd->parameters()). `fixed_selection` pins the R-variant selection;
  /// `selection_out` receives the selection that was used.
  Scalar loglik_with_grad(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                          Scalar coefficient, GradSet<Scalar>& grads,
                          const TokenSeq* fixed_selection = nullptr,
                          TokenSeq* selection_out = nullptr) const;

  const MiniLM<Scalar>& lm() const { return lm_; }
  const QDModule<Scalar>* qd() const { return qd_; }
  ScoreMode mode() const { return mode_; }

  /// Number of scoring calls whose document was cut to fit max_seq_len.
  long truncations() const { return truncations_.load(); }

private:
  Mat leading_block(std::size_t query_len) const;

  const MiniLM<Scalar>& lm_;
  const QDModule<Scalar>* qd_;
  TokenSeq prompt_;
  ScoreMode mode_;
  std::optional<Exemplar> exemplar_;
  mutable std::atomic<long> truncations_{0};
};

extern template class QueryLikelihoodScorer<double>;
extern template class QueryLikelihoodScorer<float>;

/// I_{theta*, Phi}(q | doc, s) in the given mode.
template <typename Scalar>
Scalar score_qpeft(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                   std::span<const TokenId> prompt_ids, const QDModule<Scalar>& qd,
                   const MiniLM<Scalar>& lm, ScoreMode mode = ScoreMode::Sum);

/// Same pipeline with an empty hint, optionally preceded by one exemplar.
template <typename Scalar>
Scalar score_upr(std::span<const TokenId> query_ids, std::span<const TokenId> doc_ids,
                 std::span<const TokenId> prompt_ids, const MiniLM<Scalar>& lm,
                 ScoreMode mode = ScoreMode::Sum, const std::optional<Exemplar>& exemplar = std::nullopt);

}  // namespace qpeft
