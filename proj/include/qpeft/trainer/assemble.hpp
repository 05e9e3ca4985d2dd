#pragma once

#include <span>

#include "qpeft/minilm/minilm.hpp"

namespace qpeft {

/// Prefix fed to the frozen LM before the query tokens:
///   [leading ; embed(doc) ; hint ; embed(prompt)]
/// `leading` is an optional in-context block (empty for plain scoring).
template <typename Scalar>
struct AssembledInput {
  Matrix<Scalar> prefix;
  Eigen::Index hint_offset = 0;
  Eigen::Index hint_rows = 0;
  std::size_t doc_tokens_used = 0;
  std::size_t doc_tokens_dropped = 0;  // tail truncation to respect max_seq_len
};

/// Truncates the document from its tail when prefix + |query| would exceed
/// max_seq_len; throws LengthError if even an empty document does not fit.
template <typename Scalar>
AssembledInput<Scalar> assemble_input(const MiniLM<Scalar>& lm, std::span<const TokenId> doc_ids,
                                      const Matrix<Scalar>& hint, std::span<const TokenId> prompt_ids,
                                      std::size_t query_len,
                                      const Matrix<Scalar>& leading = Matrix<Scalar>(0, 0));

}  // namespace qpeft
