#include "qpeft/evalrank/ttest.hpp"

#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>

#include "qpeft/error.hpp"

namespace qpeft {

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ContractError("incomplete_beta: a and b must be positive");
  if (x < 0.0 || x > 1.0) throw ContractError("incomplete_beta: x outside [0, 1]");
  return boost::math::ibeta(a, b, x);
}

double student_t_two_sided(double t, double df) {
  if (df <= 0.0) throw ContractError("student_t_two_sided: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_ttest: length mismatch");
  if (a.size() < 2) throw ContractError("paired_ttest: need at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double var = ss / static_cast<double>(n - 1);
  TTestResult r;
  r.n = n;
  if (var == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p = student_t_two_sided(r.t, static_cast<double>(n - 1));
  return r;
}

}  // namespace qpeft
