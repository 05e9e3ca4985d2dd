#include "qpeft/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "qpeft/numcore/rng.hpp"

namespace qpeft {

GradCheckReport finite_diff_check(const std::vector<ParamTensor<double>*>& params,
                                  const LossFn& loss_fn, double eps, std::size_t sample,
                                  std::uint64_t seed) {
  struct Coord {
    std::size_t tensor;
    Eigen::Index index;
  };
  std::vector<Coord> all;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!params[t]->trainable) continue;
    for (Eigen::Index i = 0; i < params[t]->value.size(); ++i) all.push_back({t, i});
  }

  for (auto* p : params) p->grad.setZero();
  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: non-finite loss");

  // Partial Fisher-Yates: the first `sample` entries become a uniform draw.
  Rng rng(seed);
  const std::size_t n = std::min(sample, all.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(all.size() - i));
    std::swap(all[i], all[j]);
  }

  GradCheckReport report;
  for (std::size_t c = 0; c < n; ++c) {
    auto& p = *params[all[c].tensor];
    double& x = p.value.data()[all[c].index];
    const double analytic = p.grad.data()[all[c].index];
    const double saved = x;
    x = saved + eps;
    const double up = loss_fn(false);
    x = saved - eps;
    const double down = loss_fn(false);
    x = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite loss at " + p.name);
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coordinates;
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst_tensor = p.name;
      report.worst_index = static_cast<long>(all[c].index);
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  for (auto* p : params) p->grad.setZero();
  return report;
}

}  // namespace qpeft
