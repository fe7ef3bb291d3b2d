#include "gridtrade/price_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gridtrade/detail/monotone_root.hpp"

namespace gridtrade {

namespace {

void check_inputs(std::span<const double> x, const GridParams& grid) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("optimize_prices: empty energy vector");
  if (grid.cost_linear.size() != n || grid.cost_const.size() != n)
    throw std::invalid_argument("optimize_prices: cost coefficient length mismatch");
  for (double v : x) {
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("optimize_prices: energies must be finite and nonnegative");
  }
  const double lo = static_cast<double>(n) * grid.p_min;
  const double hi = static_cast<double>(n) * grid.p_max;
  const double slack = 1e-12 * std::max(1.0, std::abs(grid.total_price));
  if (!(grid.p_min <= grid.p_max) || grid.total_price < lo - slack || grid.total_price > hi + slack) {
    std::ostringstream os;
    os << "price budget infeasible: total price " << grid.total_price
       << " must lie in [N*p_min, N*p_max] = [" << lo << ", " << hi << "] for N = " << n;
    throw PriceInfeasibleError(os.str());
  }
}

class PriceResponse {
 public:
  PriceResponse(std::span<const double> x, const GridParams& grid) : x_(x), grid_(grid) {}

  double price(std::size_t i, double nu) const {
    const double a = grid_.cost_linear[i];
    if (x_[i] > 0.0) return std::clamp((-nu - a) / (2.0 * x_[i]), grid_.p_min, grid_.p_max);
    return a < -nu ? grid_.p_max : grid_.p_min;
  }

  void fill(double nu, std::vector<double>& p) const {
    p.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) p[i] = price(i, nu);
  }

  double excess(double nu) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) s += price(i, nu);
    return s - grid_.total_price;
  }

  // Exact nu for the partition of users strictly inside the price bounds at nu.
  double refine(double nu) const {
    double fixed = 0.0;
    double inv_sum = 0.0;
    double a_sum = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double p = price(i, nu);
      if (x_[i] > 0.0 && p > grid_.p_min && p < grid_.p_max) {
        inv_sum += 1.0 / (2.0 * x_[i]);
        a_sum += grid_.cost_linear[i] / (2.0 * x_[i]);
      } else {
        fixed += p;
      }
    }
    if (inv_sum == 0.0) return nu;
    return -(grid_.total_price - fixed + a_sum) / inv_sum;
  }

 private:
  std::span<const double> x_;
  const GridParams& grid_;
};

void fill_active_sets(PriceSolution& sol, const GridParams& grid, double tol) {
  sol.active_lower.clear();
  sol.active_upper.clear();
  for (std::size_t i = 0; i < sol.prices.size(); ++i) {
    if (sol.prices[i] <= grid.p_min + tol) sol.active_lower.push_back(i);
    if (sol.prices[i] >= grid.p_max - tol) sol.active_upper.push_back(i);
  }
}

}  // namespace

PriceSolution optimize_prices(std::span<const double> x, const GridParams& grid) {
  check_inputs(x, grid);
  const std::size_t n = x.size();
  PriceResponse response(x, grid);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = grid.cost_linear[i];
    lo = std::min(lo, -a - 2.0 * x[i] * grid.p_max);
    hi = std::max(hi, -a - 2.0 * x[i] * grid.p_min);
  }
  lo -= 1.0;
  hi += 1.0;

  std::vector<double> p;
  const double tol = 1e-13 * std::max(1.0, grid.total_price);
  const auto g = [&](double nu) { return response.excess(nu); };
  auto bracket = detail::find_nonincreasing_root(g, lo, hi, g(lo), g(hi), tol);

  double nu = bracket.root;
  if (bracket.converged || std::abs(bracket.value) <= tol) {
    double best = std::abs(bracket.value);
    const double refined = response.refine(nu);
    if (std::isfinite(refined) && refined != nu) {
      const double r = std::abs(g(refined));
      if (r < best) nu = refined;
    }
    response.fill(nu, p);
  } else {
    // The sum jumps across the bracket: zero-energy users whose linear cost
    // a_i equals -nu take whatever part of the budget the others leave,
    // cheapest first.
    nu = bracket.hi;
    response.fill(nu, p);
    std::vector<double> upper_side;
    response.fill(bracket.lo, upper_side);
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < n; ++i) {
      if (upper_side[i] > p[i]) tied.push_back(i);
    }
    std::stable_sort(tied.begin(), tied.end(), [&](std::size_t a, std::size_t b) {
      return grid.cost_linear[a] < grid.cost_linear[b];
    });
    double remaining = grid.total_price - std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t i : tied) {
      if (remaining <= 0.0) break;
      const double add = std::min(remaining, upper_side[i] - p[i]);
      p[i] += add;
      remaining -= add;
    }
    nu = 0.5 * (bracket.lo + bracket.hi);
  }

  PriceSolution sol;
  sol.prices = std::move(p);
  sol.dual = nu;
  sol.cost = grid_cost(sol.prices, x, grid);
  fill_active_sets(sol, grid, 1e-12);
  return sol;
}

PriceSolution price_grid_oracle(std::span<const double> x, const GridParams& grid,
                                double resolution) {
  check_inputs(x, grid);
  const std::size_t n = x.size();
  if (n > 3) throw std::invalid_argument("price_grid_oracle: only N <= 3 is supported");
  if (!(resolution > 0.0)) throw std::invalid_argument("price_grid_oracle: resolution must be positive");

  const double pr = grid.total_price;
  const double pmin = grid.p_min;
  const double pmax = grid.p_max;
  const double eps = 1e-12 * std::max(1.0, pr);

  auto term = [&](std::size_t i, double p) {
    return x[i] * p * p + grid.cost_linear[i] * p + grid.cost_const[i];
  };

  PriceSolution best;
  best.cost = std::numeric_limits<double>::infinity();
  best.dual = std::numeric_limits<double>::quiet_NaN();
  best.prices.assign(n, pr / static_cast<double>(n));

  if (n == 1) {
    best.prices = {pr};
    best.cost = term(0, pr);
  } else if (n == 2) {
    const double a = std::max(pmin, pr - pmax);
    const double b = std::min(pmax, pr - pmin);
    for (long k = 0;; ++k) {
      const double p1 = a + static_cast<double>(k) * resolution;
      if (p1 > b + eps) break;
      const double p2 = pr - p1;
      const double c = term(0, p1) + term(1, p2);
      if (c < best.cost) {
        best.cost = c;
        best.prices = {p1, p2};
      }
    }
  } else {
    const double a1 = std::max(pmin, pr - 2.0 * pmax);
    const double b1 = std::min(pmax, pr - 2.0 * pmin);
    for (long k = 0;; ++k) {
      const double p1 = a1 + static_cast<double>(k) * resolution;
      if (p1 > b1 + eps) break;
      const double rest = pr - p1;
      const double a2 = std::max(pmin, rest - pmax);
      const double b2 = std::min(pmax, rest - pmin);
      const double c1 = term(0, p1);
      for (long j = 0;; ++j) {
        const double p2 = a2 + static_cast<double>(j) * resolution;
        if (p2 > b2 + eps) break;
        const double p3 = rest - p2;
        const double c = c1 + term(1, p2) + term(2, p3);
        if (c < best.cost) {
          best.cost = c;
          best.prices = {p1, p2, p3};
        }
      }
    }
  }
  fill_active_sets(best, grid, 1e-12);
  return best;
}

std::vector<double> project_price_slice(std::span<const double> u, const GridParams& grid) {
  const std::size_t n = u.size();
  if (n == 0) throw std::invalid_argument("project_price_slice: empty vector");
  const double nd = static_cast<double>(n);
  if (grid.total_price < nd * grid.p_min || grid.total_price > nd * grid.p_max)
    throw PriceInfeasibleError("project_price_slice: empty price slice");
  auto fill = [&](double shift, std::vector<double>& p) {
    p.resize(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(u[i] + shift, grid.p_min, grid.p_max);
  };
  std::vector<double> p;
  // Deficit is nonincreasing in the shift.
  auto deficit = [&](double shift) {
    fill(shift, p);
    return grid.total_price - std::accumulate(p.begin(), p.end(), 0.0);
  };
  const auto [umin, umax] = std::minmax_element(u.begin(), u.end());
  const double lo = grid.p_min - *umax - 1.0;
  const double hi = grid.p_max - *umin + 1.0;
  const double tol = 1e-13 * std::max(1.0, grid.total_price);
  auto bracket = detail::find_nonincreasing_root(deficit, lo, hi, deficit(lo), deficit(hi), tol);
  fill(bracket.root, p);
  return p;
}

KktResiduals price_kkt_residuals(std::span<const double> x, const GridParams& grid,
                                 const PriceSolution& sol, double bound_tol) {
  KktResiduals k;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = sol.prices[i];
    sum += p;
    const double grad = 2.0 * x[i] * p + grid.cost_linear[i] + sol.dual;
    k.bounds = std::max({k.bounds, grid.p_min - p, p - grid.p_max});
    if (p <= grid.p_min + bound_tol) {
      k.complementarity = std::max(k.complementarity, -grad);
    } else if (p >= grid.p_max - bound_tol) {
      k.complementarity = std::max(k.complementarity, grad);
    } else {
      k.stationarity = std::max(k.stationarity, std::abs(grad));
    }
  }
  k.equality = std::abs(sum - grid.total_price);
  return k;
}

}  // namespace gridtrade
