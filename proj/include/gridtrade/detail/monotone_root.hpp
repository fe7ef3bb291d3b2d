#pragma once

#include <cmath>

namespace gridtrade::detail {

struct RootBracket {
  double lo = 0.0;
  double hi = 0.0;
  double g_lo = 0.0;
  double g_hi = 0.0;
  double root = 0.0;     // best point found
  double value = 0.0;    // g(root)
  bool converged = false;
  int iterations = 0;
};

// Root of a nonincreasing function g on [lo, hi] with g(lo) >= 0 >= g(hi).
// Each iteration takes a false-position step followed by a bisection step, so
// the bracket at least halves and piecewise-linear g is solved exactly once
// the bracket sits inside a single linear piece. Jumps in g are allowed; in
// that case the bracket collapses onto the jump and converged stays false.
template <class G>
RootBracket find_nonincreasing_root(G&& g, double lo, double hi, double g_lo, double g_hi,
                                    double tol, int max_iterations = 300) {
  RootBracket b{lo, hi, g_lo, g_hi, lo, g_lo, false, 0};
  auto consider = [&](double t, double gt) {
    if (std::abs(gt) < std::abs(b.value)) {
      b.root = t;
      b.value = gt;
    }
    if (gt >= 0.0) {
      b.lo = t;
      b.g_lo = gt;
    } else {
      b.hi = t;
      b.g_hi = gt;
    }
    return std::abs(gt) <= tol;
  };
  if (std::abs(g_hi) < std::abs(b.value)) {
    b.root = hi;
    b.value = g_hi;
  }
  if (std::abs(b.value) <= tol) {
    b.converged = true;
    return b;
  }
  while (b.iterations < max_iterations) {
    ++b.iterations;
    const double denom = b.g_lo - b.g_hi;
    double s = denom > 0.0 ? b.lo + (b.hi - b.lo) * (b.g_lo / denom) : 0.5 * (b.lo + b.hi);
    if (!(s > b.lo && s < b.hi)) s = 0.5 * (b.lo + b.hi);
    if (!(s > b.lo && s < b.hi)) break;
    if (consider(s, g(s))) {
      b.converged = true;
      return b;
    }
    const double m = 0.5 * (b.lo + b.hi);
    if (!(m > b.lo && m < b.hi)) break;
    if (consider(m, g(m))) {
      b.converged = true;
      return b;
    }
  }
  return b;
}

}  // namespace gridtrade::detail
