#pragma once

#include <span>

#include "qpeft/minilm/minilm.hpp"

namespace qpeft {

/// Input rows used to score `targets` after `prefix`:
/// [prefix ; embed(targets[0..n-2])]. An empty prefix is replaced by the
/// BOS embedding so the first target still has a conditioning position.
template <typename Scalar>
Matrix<Scalar> continuation_input(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                  std::span<const TokenId> targets);

/// Sum over l of log p(target_l | prefix, target_<l), natural log.
/// Reads the distribution for target l at the position just before it.
template <typename Scalar>
Scalar continuation_loglik(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                           std::span<const TokenId> targets);

template <typename Scalar>
struct LogLikGrad {
  Scalar value = 0;
  /// d(coefficient * value)/d(input rows); the first `prefix_rows` rows
  /// correspond to the prefix (or to the substituted BOS row).
  Matrix<Scalar> d_input;
  Eigen::Index prefix_rows = 0;
};

/// Log-likelihood and the gradient of `coefficient * loglik` with respect to
/// the assembled input. The model is not modified.
template <typename Scalar>
LogLikGrad<Scalar> continuation_loglik_grad(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                            std::span<const TokenId> targets, Scalar coefficient);

/// As continuation_loglik_grad, additionally accumulating parameter
/// gradients into every trainable LM tensor.
template <typename Scalar>
LogLikGrad<Scalar> continuation_loglik_train(MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                             std::span<const TokenId> targets, Scalar coefficient);

}  // namespace qpeft
