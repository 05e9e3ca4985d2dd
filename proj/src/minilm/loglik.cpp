#include "qpeft/minilm/loglik.hpp"

#include <string>
#include <vector>

namespace qpeft {

template <typename Scalar>
Matrix<Scalar> continuation_input(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                  std::span<const TokenId> targets) {
  if (prefix.rows() > 0 && prefix.cols() != lm.dim()) {
    throw DimensionError("continuation_loglik: prefix width != model_dim");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index p = prefix.rows() > 0 ? prefix.rows() : 1;
  const Eigen::Index total = p + (n > 0 ? n - 1 : 0);
  if (p + n > lm.config().max_seq_len) {
    throw LengthError("continuation_loglik: prefix + target length " + std::to_string(p + n) +
                      " exceeds max_seq_len " + std::to_string(lm.config().max_seq_len));
  }
  Matrix<Scalar> input(total, lm.dim());
  if (prefix.rows() > 0) {
    input.topRows(p) = prefix;
  } else {
    const TokenId bos = kBos;
    input.topRows(1) = lm.embed(std::span<const TokenId>(&bos, 1));
  }
  if (n > 1) input.bottomRows(n - 1) = lm.embed(targets.first(targets.size() - 1));
  return input;
}

namespace {

template <typename Scalar>
std::vector<Eigen::Index> target_rows(Eigen::Index prefix_rows, std::size_t n) {
  std::vector<Eigen::Index> rows(n);
  for (std::size_t l = 0; l < n; ++l) rows[l] = prefix_rows - 1 + static_cast<Eigen::Index>(l);
  return rows;
}

}  // namespace

template <typename Scalar>
Scalar continuation_loglik(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                           std::span<const TokenId> targets) {
  if (targets.empty()) return Scalar(0);
  const Matrix<Scalar> input = continuation_input(lm, prefix, targets);
  const Eigen::Index p = prefix.rows() > 0 ? prefix.rows() : 1;
  const auto rows = target_rows<Scalar>(p, targets.size());
  const Matrix<Scalar> logits = lm.forward_rows(input, rows, nullptr);
  Scalar total = 0;
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const auto ls = log_softmax_row(logits.row(static_cast<Eigen::Index>(l)));
    total += ls(targets[l]);
  }
  return total;
}

namespace {

template <typename Scalar>
LogLikGrad<Scalar> loglik_backprop(const MiniLM<Scalar>& lm, MiniLM<Scalar>* trainable,
                                   const Matrix<Scalar>& prefix, std::span<const TokenId> targets,
                                   Scalar coefficient) {
  LogLikGrad<Scalar> out;
  out.prefix_rows = prefix.rows() > 0 ? prefix.rows() : 1;
  const Matrix<Scalar> input = continuation_input(lm, prefix, targets);
  if (targets.empty()) {
    out.d_input = Matrix<Scalar>::Zero(input.rows(), input.cols());
    return out;
  }
  const auto rows = target_rows<Scalar>(out.prefix_rows, targets.size());
  typename MiniLM<Scalar>::Cache cache;
  const Matrix<Scalar> logits = lm.forward_rows(input, rows, &cache);
  Matrix<Scalar> d_logits(logits.rows(), logits.cols());
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    const auto ls = log_softmax_row(logits.row(li));
    out.value += ls(targets[l]);
    // d log p_target / d logits = onehot - softmax
    d_logits.row(li) = -coefficient * ls.array().exp().matrix();
    d_logits(li, targets[l]) += coefficient;
  }
  out.d_input = trainable ? trainable->backward(cache, d_logits, true) : lm.input_gradient(cache, d_logits);
  return out;
}

}  // namespace

template <typename Scalar>
LogLikGrad<Scalar> continuation_loglik_grad(const MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                            std::span<const TokenId> targets, Scalar coefficient) {
  return loglik_backprop<Scalar>(lm, nullptr, prefix, targets, coefficient);
}

template <typename Scalar>
LogLikGrad<Scalar> continuation_loglik_train(MiniLM<Scalar>& lm, const Matrix<Scalar>& prefix,
                                             std::span<const TokenId> targets, Scalar coefficient) {
  return loglik_backprop<Scalar>(lm, &lm, prefix, targets, coefficient);
}

template Matrix<double> continuation_input(const MiniLM<double>&, const Matrix<double>&, std::span<const TokenId>);
template Matrix<float> continuation_input(const MiniLM<float>&, const Matrix<float>&, std::span<const TokenId>);
template double continuation_loglik(const MiniLM<double>&, const Matrix<double>&, std::span<const TokenId>);
template float continuation_loglik(const MiniLM<float>&, const Matrix<float>&, std::span<const TokenId>);
template LogLikGrad<double> continuation_loglik_grad(const MiniLM<double>&, const Matrix<double>&,
                                                     std::span<const TokenId>, double);
template LogLikGrad<float> continuation_loglik_grad(const MiniLM<float>&, const Matrix<float>&,
                                                    std::span<const TokenId>, float);
template LogLikGrad<double> continuation_loglik_train(MiniLM<double>&, const Matrix<double>&,
                                                      std::span<const TokenId>, double);
template LogLikGrad<float> continuation_loglik_train(MiniLM<float>&, const Matrix<float>&,
                                                     std::span<const TokenId>, float);

}  // namespace qpeft
