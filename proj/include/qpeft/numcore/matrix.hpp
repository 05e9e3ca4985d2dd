#pragma once

#include <Eigen/Dense>

#include <string>

#include "qpeft/error.hpp"

namespace qpeft {

/// Dense row-major matrix. `double` is the checking precision, `float` the
/// opt-in run precision.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using MatrixXf = Matrix<float>;

/// Throws NumericError naming `where` if any entry is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* where) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite value produced in ") + where);
  }
}

template <typename A, typename B>
void require_same_shape(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b,
                        const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(where) + ": shape " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

}  // namespace qpeft
