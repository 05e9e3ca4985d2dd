#pragma once

#include <cstddef>
#include <span>

namespace qpeft {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

/// Paired two-tailed t-test on a - b (n - 1 degrees of freedom).
/// Zero-variance differences give p = 1 when their mean is 0, else p = 0.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace qpeft
