#pragma once

#include <cmath>
#include <stdexcept>

namespace ctdtr {

// Bisection on [lo, hi] for a nondecreasing f with f(lo) <= target <= f(hi).
// Returns the abscissa, to absolute tolerance x_tol. Unconditionally stable,
// which is what the monotone compensator and cumulative hazard need.
template <class F>
double bisect_increasing(const F& f, double lo, double hi, double target,
                         double x_tol) {
  if (!(hi >= lo)) throw std::invalid_argument("bisect_increasing: hi < lo");
  while (hi - lo > x_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // ran out of precision
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Bracket a root of the nondecreasing f by doubling the step from
// `initial_step`, then bisect. `limit` caps the search; returns limit if the
// target is not reached below it (caller decides how to treat the cap).
template <class F>
double solve_increasing(const F& f, double target, double initial_step,
                        double limit, double x_tol) {
  double lo = 0.0;
  double hi = initial_step;
  while (hi < limit && f(hi) < target) {
    lo = hi;
    hi *= 2.0;
  }
  if (hi >= limit) {
    if (f(limit) < target) return limit;
    hi = limit;
  }
  return bisect_increasing(f, lo, hi, target, x_tol);
}

}  // namespace ctdtr
