#pragma once

#include <cmath>

#include "qpeft/numcore/matrix.hpp"

namespace qpeft {

/// Row-major product with a shape check. Gradients: dA = dC·Bᵀ, dB = Aᵀ·dC.
template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix<Scalar> c = a * b;
  require_finite(c, "matmul");
  return c;
}

/// Row-wise softmax with per-row max subtraction.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& x) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  require_finite(y, "softmax_rows");
  return y;
}

/// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& y, const Matrix<Scalar>& dy) {
  Matrix<Scalar> dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const Scalar dot = y.row(r).dot(dy.row(r));
    dx.row(r) = (y.row(r).array() * (dy.row(r).array() - dot)).matrix();
  }
  return dx;
}

/// log-softmax of a single row, max-shifted.
template <typename Derived>
auto log_softmax_row(const Eigen::MatrixBase<Derived>& row) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = row.maxCoeff();
  const Scalar lse = mx + std::log((row.array() - mx).exp().sum());
  return RowVector<Scalar>((row.array() - lse).matrix());
}

/// Per-row statistics kept by layer_norm for its backward pass.
template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> xhat;
  Vector<Scalar> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& gain,
                          const Matrix<Scalar>& bias, LayerNormCache<Scalar>* cache) {
  const Eigen::Index n = x.cols();
  Matrix<Scalar> xhat(x.rows(), n);
  Vector<Scalar> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const Scalar var = centered.squaredNorm() / static_cast<Scalar>(n);
    inv_std(r) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix<Scalar> y = (xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

/// Returns dL/dx; adds dL/dgain and dL/dbias into the given accumulators when non-null.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const Matrix<Scalar>& gain,
                                   const Matrix<Scalar>& dy, Matrix<Scalar>* dgain,
                                   Matrix<Scalar>* dbias) {
  const Eigen::Index n = dy.cols();
  if (dgain) dgain->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbias) dbias->row(0) += dy.colwise().sum();
  Matrix<Scalar> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  Matrix<Scalar> dx(dy.rows(), n);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Scalar mean_d = dxhat.row(r).mean();
    const Scalar mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<Scalar>(n);
    dx.row(r) = ((dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx) *
                 cache.inv_std(r))
                    .matrix();
  }
  return dx;
}

// tanh-approximated GELU
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const Scalar c = static_cast<Scalar>(0.7978845608028654);
  const Scalar a = static_cast<Scalar>(0.044715);
  return x.unaryExpr([=](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(c * (v + a * v * v * v)));
  });
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const Scalar c = static_cast<Scalar>(0.7978845608028654);
  const Scalar a = static_cast<Scalar>(0.044715);
  Matrix<Scalar> d = x.unaryExpr([=](Scalar v) {
    const Scalar t = std::tanh(c * (v + a * v * v * v));
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * v * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3) * a * v * v);
  });
  return (d.array() * dy.array()).matrix();
}

}  // namespace qpeft
