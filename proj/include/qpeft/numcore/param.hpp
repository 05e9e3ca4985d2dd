#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qpeft/numcore/matrix.hpp"

namespace qpeft {

/// A named weight with its gradient accumulator. Frozen tensors reject
/// gradient accumulation.
template <typename Scalar>
struct ParamTensor {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool trainable = true;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix<Scalar> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(); }

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!trainable) throw ContractError("gradient accumulated into frozen tensor " + name);
    require_same_shape(grad, g, name.c_str());
    grad += g;
  }
};

/// Gradients for a parameter list, held apart from the tensors so that
/// independent scoring passes can be reduced in a fixed order.
template <typename Scalar>
using GradSet = std::vector<Matrix<Scalar>>;

template <typename Scalar>
GradSet<Scalar> zeros_like(const std::vector<ParamTensor<Scalar>*>& params) {
  GradSet<Scalar> g;
  g.reserve(params.size());
  for (const auto* p : params) g.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  return g;
}

template <typename Scalar>
void accumulate(const std::vector<ParamTensor<Scalar>*>& params, const GradSet<Scalar>& grads) {
  if (params.size() != grads.size()) throw DimensionError("accumulate: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->accumulate(grads[i]);
}

struct AdamHyper {
  double lr = 3e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  long step = 0;
  Matrix<Scalar> m;
  Matrix<Scalar> v;
  double lr = 3e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(const ParamTensor<Scalar>& p, const AdamHyper& h)
      : m(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols())),
        v(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols())),
        lr(h.lr),
        beta1(h.beta1),
        beta2(h.beta2),
        epsilon(h.epsilon) {}
};

/// One bias-corrected Adam update. Increments the step and zeroes the gradient.
template <typename Scalar>
void adam_step(ParamTensor<Scalar>& p, AdamState<Scalar>& s) {
  if (!p.trainable) throw ContractError("adam_step on frozen tensor " + p.name);
  require_same_shape(p.value, s.m, "adam_step");
  require_same_shape(p.value, s.v, "adam_step");
  ++s.step;
  const Scalar b1 = static_cast<Scalar>(s.beta1);
  const Scalar b2 = static_cast<Scalar>(s.beta2);
  s.m = b1 * s.m + (Scalar(1) - b1) * p.grad;
  s.v = b2 * s.v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(s.beta1, static_cast<double>(s.step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(s.beta2, static_cast<double>(s.step)));
  const Scalar lr = static_cast<Scalar>(s.lr);
  const Scalar eps = static_cast<Scalar>(s.epsilon);
  p.value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  require_finite(p.value, "adam_step");
  p.zero_grad();
}

}  // namespace qpeft
