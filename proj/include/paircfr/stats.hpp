#pragma once

#include <span>
#include <vector>

namespace paircfr {

// Regularized incomplete beta function I_x(a, b), evaluated with the
// modified Lentz continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

// CDF of Student's t distribution with `dof` degrees of freedom.
double student_t_cdf(double x, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool exact_tie = false;  // all differences identically zero
};

// Two-sided paired-samples t test. Throws std::invalid_argument on length
// mismatch or fewer than two observations, and std::runtime_error
// ("degenerate: constant difference") when the differences are a nonzero
// constant. All-zero differences are reported as an exact tie (t=0, p=1).
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Sample standard deviation (n-1 denominator).
double sample_std(std::span<const double> v);

}  // namespace paircfr
