#include "paircfr/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace paircfr {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double incbeta_cf(double x, double a, double b) {
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double result = d;

  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    // even term
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    result *= d * c;
    // odd term
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double mult = d * c;
    result *= mult;
    if (std::fabs(mult - 1.0) < 1e-15) break;
  }
  return result;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0 && a > 0.0 && b > 0.0))
    return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) -
                           (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  // continued fraction converges fastest below the distribution mean
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * incbeta_cf(x, a, b) / a;
  return 1.0 - std::exp(log_front) * incbeta_cf(1.0 - x, b, a) / b;
}

double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return 0.5;
  const double ib =
      regularized_incomplete_beta(dof / (x * x + dof), 0.5 * dof, 0.5);
  return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_ttest: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_ttest: need >= 2 pairs");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  bool constant = true;
  for (std::size_t i = 1; i < n; ++i)
    if (d[i] != d[0]) {
      constant = false;
      break;
    }
  if (constant) {
    if (d[0] == 0.0) return {0.0, 1.0, true};
    throw std::runtime_error("degenerate: constant difference");
  }

  const double dbar = mean(d);
  const double sd = sample_std(d);
  TTestResult r;
  r.t = dbar / (sd / std::sqrt(static_cast<double>(n)));
  const double dof = static_cast<double>(n - 1);
  r.p = 2.0 * student_t_cdf(-std::fabs(r.t), dof);
  return r;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace paircfr
