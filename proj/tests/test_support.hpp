#pragma once

// Test-side oracles, deliberately independent of the library implementations
// they check: a plain fixed-refinement Simpson rule, a tolerance-driven
// bisection, a one-sample Kolmogorov-Smirnov test, and small stat helpers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ctdtr/math/special.hpp"

namespace test_support {

// Composite Simpson with doubling panel counts until two refinements agree.
inline double oracle_integrate(const std::function<double(double)>& f, double a,
                               double b, double rel_tol = 1e-11,
                               int max_panels = 1 << 22) {
  if (b <= a) return 0.0;
  auto composite = [&](int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += ((i % 2) ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
  };
  int n = 64;
  double prev = composite(n);
  for (n *= 2; n <= max_panels; n *= 2) {
    const double cur = composite(n);
    if (std::fabs(cur - prev) <= rel_tol * (std::fabs(cur) + 1e-30)) return cur;
    prev = cur;
  }
  return prev;
}

inline double oracle_bisect(const std::function<double(double)>& f, double lo,
                            double hi, double target, double x_tol = 1e-9) {
  while (hi - lo > x_tol) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// One-sample KS p-value against a CDF (Stephens' small-sample correction).
inline double ks_pvalue(std::vector<double> samples,
                        const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    d = std::max(d, std::fabs(F - (i + 1) / n));
    d = std::max(d, std::fabs(F - i / n));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  return ctdtr::kolmogorov_q(lambda);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

inline double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

}  // namespace test_support
