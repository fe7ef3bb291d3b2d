#pragma once

// Leader's problem: minimize sum_i x_i p_i^2 + a_i p_i + b_i subject to
// sum_i p_i = P_r and p_min <= p_i <= p_max.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "gridtrade/model.hpp"

namespace gridtrade {

class PriceInfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct PriceSolution {
  std::vector<double> prices;
  double dual = 0.0;  // multiplier of the equality constraint
  double cost = 0.0;
  std::vector<std::size_t> active_lower;
  std::vector<std::size_t> active_upper;
};

/// Exact minimizer via bracketing on the equality multiplier nu. For x_i > 0,
/// p_i(nu) = clamp((-nu - a_i) / (2 x_i), p_min, p_max); for x_i = 0 the cost
/// is linear, so p_i(nu) sits at p_max when a_i < -nu and at p_min when
/// a_i > -nu, and users tied at a_i = -nu absorb the remaining budget,
/// cheapest first.
PriceSolution optimize_prices(std::span<const double> x, const GridParams& grid);

/// Exhaustive lattice search over the price slice (last coordinate eliminated
/// by the equality constraint). Test-only; requires N <= 3.
PriceSolution price_grid_oracle(std::span<const double> x, const GridParams& grid,
                                double resolution);

/// Euclidean projection of u onto {p : sum p = P_r, p_min <= p_i <= p_max},
/// p_i = clamp(u_i + s) with the scalar shift s found by bracketing.
std::vector<double> project_price_slice(std::span<const double> u, const GridParams& grid);

/// Largest |2 x_i p_i + a_i + nu| over components strictly between the bounds,
/// and the worst complementarity violation at the bounds.
struct KktResiduals {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double equality = 0.0;
  double bounds = 0.0;
};

KktResiduals price_kkt_residuals(std::span<const double> x, const GridParams& grid,
                                 const PriceSolution& sol, double bound_tol = 1e-12);

}  // namespace gridtrade
