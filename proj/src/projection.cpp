#include "gridtrade/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gridtrade/detail/monotone_root.hpp"

namespace gridtrade {

namespace {

void check_input(std::span<const double> v, const FeasibleSet& set, const char* what) {
  if (v.size() != set.size()) {
    std::ostringstream os;
    os << what << ": vector length " << v.size() << " does not match set size " << set.size();
    throw std::invalid_argument(os.str());
  }
  for (double t : v) {
    if (!std::isfinite(t)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

double clamped_sum(std::span<const double> v, std::span<const double> upper, double shift) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::clamp(v[i] - shift, 0.0, upper[i]);
  return s;
}

// Exact multiplier for the active partition at lambda, if it has free components.
double refine_multiplier(std::span<const double> v, std::span<const double> upper, double budget,
                         double lambda) {
  double free_sum = 0.0;
  double capped = 0.0;
  std::size_t free_count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = v[i] - lambda;
    if (t >= upper[i]) {
      capped += upper[i];
    } else if (t > 0.0) {
      free_sum += v[i];
      ++free_count;
    }
  }
  if (free_count == 0) return lambda;
  return (free_sum + capped - budget) / static_cast<double>(free_count);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double face_aware_inner(std::span<const double> a, std::span<const double> u,
                        std::span<const double> v, double budget) {
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  const double face_tol = 1e-12 * std::max(1.0, budget);
  auto face_sum = [&](std::span<const double> w) {
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    return std::abs(s - budget) <= face_tol ? budget : s;
  };
  // Any centre works algebraically; weighting by the displacement keeps
  // components pinned at a bound from pulling it away from the free ones.
  double a_sum = 0.0;
  double weight = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = std::abs(u[i] - v[i]);
    a_sum += wi * a[i];
    weight += wi;
  }
  if (weight == 0.0) return 0.0;
  const double mean = a_sum / weight;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - mean) * (u[i] - v[i]);
  return s + mean * (face_sum(u) - face_sum(v));
}

ProjectionResult project_box_budget(std::span<const double> v, const FeasibleSet& set) {
  check_input(v, set, "project_box_budget");
  const auto upper = set.upper_bounds();
  const double budget = set.budget();

  ProjectionResult result;
  result.point.resize(v.size());
  if (clamped_sum(v, upper, 0.0) <= budget) {
    for (std::size_t i = 0; i < v.size(); ++i) result.point[i] = std::clamp(v[i], 0.0, upper[i]);
    return result;
  }

  // g(0) > 0 and g(max v) = -budget < 0.
  auto g = [&](double lambda) { return clamped_sum(v, upper, lambda) - budget; };
  const double hi = *std::max_element(v.begin(), v.end());
  const double tol = 1e-12 * std::max(1.0, budget);
  auto bracket = detail::find_nonincreasing_root(g, 0.0, hi, g(0.0), g(hi), tol);

  double lambda = bracket.root;
  double residual = bracket.value;
  const double refined = refine_multiplier(v, upper, budget, lambda);
  if (refined >= 0.0 && refined != lambda) {
    const double r = g(refined);
    if (std::abs(r) < std::abs(residual)) {
      lambda = refined;
      residual = r;
    }
  }
  if (std::abs(residual) > tol)
    throw ProjectionError("project_box_budget: multiplier search did not converge");

  for (std::size_t i = 0; i < v.size(); ++i)
    result.point[i] = std::clamp(v[i] - lambda, 0.0, upper[i]);
  result.multiplier = lambda;
  result.active_budget = lambda > 0.0;
  result.iterations = bracket.iterations;
  return result;
}

std::vector<double> project_halfspace_then_set(std::span<const double> x,
                                               std::span<const double> normal,
                                               std::span<const double> offset_point,
                                               const FeasibleSet& set) {
  check_input(x, set, "project_halfspace_then_set");
  check_input(normal, set, "project_halfspace_then_set");
  check_input(offset_point, set, "project_halfspace_then_set");
  const double normal_sq = dot(normal, normal);
  if (!(normal_sq > 0.0)) throw std::invalid_argument("project_halfspace_then_set: zero normal");

  const std::size_t n = x.size();
  std::vector<double> shifted(n);
  auto project_at = [&](double nu) {
    for (std::size_t i = 0; i < n; ++i) shifted[i] = x[i] - nu * normal[i];
    return project_box_budget(shifted, set).point;
  };
  auto value = [&](std::span<const double> w) {
    return face_aware_inner(normal, w, offset_point, set.budget());
  };
  auto h = [&](double nu) { return value(project_at(nu)); };

  const auto w0 = project_at(0.0);
  const double h0 = value(w0);
  if (h0 <= 0.0) return w0;

  const double tol = 1e-12 * h0;

  double hi = std::max(h0 / normal_sq, 1e-300);
  double h_hi = h(hi);
  for (int k = 0; h_hi > 0.0; ++k) {
    if (k == 200 || !std::isfinite(hi))
      throw ProjectionError("project_halfspace_then_set: empty intersection with the halfspace");
    hi *= 2.0;
    h_hi = h(hi);
  }
  auto bracket = detail::find_nonincreasing_root(h, 0.0, hi, h0, h_hi, tol);
  if (bracket.value > 0.0 && !bracket.converged) {
    // Land on the feasible side of the halfspace.
    return project_at(bracket.hi);
  }
  return project_at(bracket.root);
}

DykstraResult project_halfspace_then_set_dykstra(std::span<const double> x,
                                                 std::span<const double> normal,
                                                 std::span<const double> offset_point,
                                                 const FeasibleSet& set, int max_alternations) {
  check_input(x, set, "project_halfspace_then_set_dykstra");
  const double normal_sq = dot(normal, normal);
  if (!(normal_sq > 0.0))
    throw std::invalid_argument("project_halfspace_then_set_dykstra: zero normal");
  const double offset = dot(normal, offset_point);
  const std::size_t n = x.size();

  std::vector<double> y(x.begin(), x.end());
  std::vector<double> p(n, 0.0), q(n, 0.0), tmp(n), a(n), b(n);
  std::vector<double> prev_a(n, std::numeric_limits<double>::infinity());
  for (int k = 1; k <= max_alternations; ++k) {
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + p[i];
    a = project_box_budget(tmp, set).point;
    for (std::size_t i = 0; i < n; ++i) p[i] = tmp[i] - a[i];

    for (std::size_t i = 0; i < n; ++i) tmp[i] = a[i] + q[i];
    const double excess = dot(normal, tmp) - offset;
    const double step = excess > 0.0 ? excess / normal_sq : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = tmp[i] - step * normal[i];
      q[i] = tmp[i] - b[i];
    }

    double move = 0.0;
    double gap = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      move = std::max({move, std::abs(a[i] - prev_a[i]), std::abs(b[i] - y[i])});
      gap = std::max(gap, std::abs(a[i] - b[i]));
    }
    prev_a = a;
    y = b;
    if (move < 1e-12 && gap < 1e-9) return {a, k};
  }
  throw ProjectionError("project_halfspace_then_set_dykstra: no convergence after " +
                        std::to_string(max_alternations) + " alternations");
}

}  // namespace gridtrade
