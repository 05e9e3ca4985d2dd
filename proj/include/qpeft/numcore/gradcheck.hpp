#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qpeft/numcore/param.hpp"

namespace qpeft {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  long worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Loss callback. With `with_grad` set it must also accumulate the analytic
/// gradient of the returned loss into each tensor's `grad`.
using LossFn = std::function<double(bool with_grad)>;

/// Compares analytic gradients against central differences
/// (L(x+eps) - L(x-eps)) / 2eps on `sample` coordinates drawn without
/// replacement from all trainable tensors. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-12).
GradCheckReport finite_diff_check(const std::vector<ParamTensor<double>*>& params,
                                  const LossFn& loss_fn, double eps, std::size_t sample,
                                  std::uint64_t seed);

}  // namespace qpeft
