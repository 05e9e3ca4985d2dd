#include "qpeft/trainer/assemble.hpp"

#include <algorithm>
#include <string>

namespace qpeft {

template <typename Scalar>
AssembledInput<Scalar> assemble_input(const MiniLM<Scalar>& lm, std::span<const TokenId> doc_ids,
                                      const Matrix<Scalar>& hint, std::span<const TokenId> prompt_ids,
                                      std::size_t query_len, const Matrix<Scalar>& leading) {
  const Eigen::Index d = lm.dim();
  if (hint.rows() > 0 && hint.cols() != d) throw DimensionError("assemble_input: hint width != model_dim");
  if (leading.rows() > 0 && leading.cols() != d) throw DimensionError("assemble_input: leading width != model_dim");

  const std::size_t max_len = static_cast<std::size_t>(lm.config().max_seq_len);
  const std::size_t fixed = static_cast<std::size_t>(leading.rows() + hint.rows()) + prompt_ids.size() + query_len;
  if (fixed > max_len) {
    throw LengthError("assemble_input: hint + prompt + query length " + std::to_string(fixed) +
                      " exceeds max_seq_len " + std::to_string(max_len));
  }
  const std::size_t doc_len = std::min(doc_ids.size(), max_len - fixed);

  AssembledInput<Scalar> out;
  out.doc_tokens_used = doc_len;
  out.doc_tokens_dropped = doc_ids.size() - doc_len;
  const Eigen::Index lead = leading.rows();
  const Eigen::Index dl = static_cast<Eigen::Index>(doc_len);
  const Eigen::Index pl = static_cast<Eigen::Index>(prompt_ids.size());
  out.hint_offset = lead + dl;
  out.hint_rows = hint.rows();
  out.prefix.resize(lead + dl + hint.rows() + pl, d);
  if (lead > 0) out.prefix.topRows(lead) = leading;
  if (dl > 0) out.prefix.middleRows(lead, dl) = lm.embed(doc_ids.first(doc_len));
  if (hint.rows() > 0) out.prefix.middleRows(out.hint_offset, hint.rows()) = hint;
  if (pl > 0) out.prefix.bottomRows(pl) = lm.embed(prompt_ids);
  return out;
}

template AssembledInput<double> assemble_input(const MiniLM<double>&, std::span<const TokenId>, const Matrix<double>&,
                                               std::span<const TokenId>, std::size_t, const Matrix<double>&);
template AssembledInput<float> assemble_input(const MiniLM<float>&, std::span<const TokenId>, const Matrix<float>&,
                                              std::span<const TokenId>, std::size_t, const Matrix<float>&);

}  // namespace qpeft
