#pragma once

// Euclidean projections onto the coupled strategy set X (box plus one budget
// halfspace) and onto X intersected with a separating halfspace.

#include <span>
#include <stdexcept>
#include <vector>

#include "gridtrade/model.hpp"

namespace gridtrade {

class ProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProjectionResult {
  std::vector<double> point;
  double multiplier = 0.0;  // Lagrange multiplier of the budget constraint
  bool active_budget = false;
  int iterations = 0;
};

/// argmin over X of ||w - v||. The solution is clamp(v - lambda, 0, E) with
/// lambda = 0 when the clamped point already meets the budget; otherwise lambda
/// is the root of sum_i clamp(v_i - lambda, 0, E_i) = budget.
ProjectionResult project_box_budget(std::span<const double> v, const FeasibleSet& set);

/// Projection of x onto X intersected with {w : <normal, w - offset_point> <= 0}.
///
/// Solved through the one-dimensional dual in the halfspace multiplier nu:
/// w(nu) = project_box_budget(x - nu * normal) and <normal, w(nu)> is
/// nonincreasing in nu, so the complementary nu is found by a bracketing
/// search. Throws ProjectionError when the intersection is empty or the
/// search fails to converge.
std::vector<double> project_halfspace_then_set(std::span<const double> x,
                                               std::span<const double> normal,
                                               std::span<const double> offset_point,
                                               const FeasibleSet& set);

/// <a, u - v> for u, v in X, evaluated as <a - m, u - v> + m (sum u - sum v)
/// with m the displacement-weighted mean of a, and sums within 1e-12
/// relative of the budget taken as the budget. Avoids cancellation when a is nearly parallel to the
/// all-ones vector and both points sit on the budget face.
double face_aware_inner(std::span<const double> a, std::span<const double> u,
                        std::span<const double> v, double budget);

struct DykstraResult {
  std::vector<double> point;
  int alternations = 0;
};

/// Same projection computed by Dykstra's alternating scheme between X and the
/// halfspace. Stops when successive iterates move less than 1e-12; throws
/// ProjectionError after max_alternations.
DykstraResult project_halfspace_then_set_dykstra(std::span<const double> x,
                                                 std::span<const double> normal,
                                                 std::span<const double> offset_point,
                                                 const FeasibleSet& set,
                                                 int max_alternations = 10000);

}  // namespace gridtrade
