#include "gridtrade/model.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gridtrade {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": length mismatch (" << a << " vs " << b << ")";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

std::vector<double> Scenario::surpluses() const {
  std::vector<double> e;
  e.reserve(users.size());
  for (const auto& u : users) e.push_back(u.surplus);
  return e;
}

FeasibleSet::FeasibleSet(std::vector<double> upper_bounds, double budget)
    : upper_(std::move(upper_bounds)), budget_(budget) {
  if (upper_.empty()) throw std::invalid_argument("FeasibleSet: no users");
  if (!(budget_ > 0.0) || !std::isfinite(budget_))
    throw std::invalid_argument("FeasibleSet: budget must be positive and finite");
  for (double e : upper_) {
    if (!(e > 0.0) || !std::isfinite(e))
      throw std::invalid_argument("FeasibleSet: upper bounds must be positive and finite");
  }
}

FeasibleSet FeasibleSet::from_scenario(const Scenario& s) {
  return FeasibleSet(s.surpluses(), s.grid.deficiency);
}

bool FeasibleSet::contains(std::span<const double> x, double tol) const {
  if (x.size() != upper_.size()) return false;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || x[i] < -tol || x[i] > upper_[i] + tol) return false;
    sum += x[i];
  }
  return sum <= budget_ + tol;
}

double eu_utility(double x, double surplus, double price) {
  if (!std::isfinite(x) || !std::isfinite(surplus) || !std::isfinite(price))
    throw std::invalid_argument("eu_utility: non-finite input");
  if (x < 0.0) throw std::invalid_argument("eu_utility: negative energy");
  if (!(surplus > 0.0)) throw std::invalid_argument("eu_utility: surplus must be positive");
  return surplus * x - 0.5 * x * x + price * x;
}

double joint_utility(std::span<const double> x, std::span<const double> surpluses,
                     std::span<const double> prices) {
  require_same_size(x.size(), surpluses.size(), "joint_utility");
  require_same_size(x.size(), prices.size(), "joint_utility");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += eu_utility(x[i], surpluses[i], prices[i]);
  return total;
}

double joint_utility(std::span<const double> x, const Scenario& s, std::span<const double> prices) {
  const auto e = s.surpluses();
  return joint_utility(x, e, prices);
}

double grid_cost(std::span<const double> prices, std::span<const double> x, const GridParams& grid) {
  require_same_size(prices.size(), x.size(), "grid_cost");
  require_same_size(prices.size(), grid.cost_linear.size(), "grid_cost");
  require_same_size(prices.size(), grid.cost_const.size(), "grid_cost");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = prices[i];
    if (!std::isfinite(p) || !std::isfinite(x[i]))
      throw std::invalid_argument("grid_cost: non-finite input");
    total += x[i] * p * p + grid.cost_linear[i] * p + grid.cost_const[i];
  }
  return total;
}

EquilibriumResult make_equilibrium_result(const Scenario& s, std::vector<double> energies,
                                          std::vector<double> prices, int follower_iterations,
                                          double vi_residual) {
  EquilibriumResult r;
  const auto e = s.surpluses();
  require_same_size(energies.size(), e.size(), "make_equilibrium_result");
  require_same_size(prices.size(), e.size(), "make_equilibrium_result");
  r.utilities.resize(e.size());
  r.mu_values.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    r.utilities[i] = eu_utility(energies[i], e[i], prices[i]);
    r.mu_values[i] = e[i] - energies[i] + prices[i];
  }
  r.total_utility = std::accumulate(r.utilities.begin(), r.utilities.end(), 0.0);
  r.grid_cost = grid_cost(prices, energies, s.grid);
  r.follower_iterations = follower_iterations;
  r.vi_residual = vi_residual;
  r.energies = std::move(energies);
  r.prices = std::move(prices);
  return r;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].field << ": " << violations[i].message;
  }
  return os.str();
}

ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport report;
  auto add = [&](std::string field, std::string message) {
    report.violations.push_back({std::move(field), std::move(message)});
  };
  const auto n = s.users.size();
  if (n == 0) add("users", "scenario has no energy users");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = s.users[i];
    if (u.id != static_cast<int>(i)) {
      add("users[" + std::to_string(i) + "].id",
          "ids must be unique and contiguous from 0 (found " + std::to_string(u.id) + ")");
    }
    if (!(u.surplus > 0.0) || !std::isfinite(u.surplus))
      add("users[" + std::to_string(i) + "].surplus", "surplus must be positive and finite");
  }

  const auto& g = s.grid;
  if (!(g.deficiency > 0.0) || !std::isfinite(g.deficiency))
    add("grid.deficiency", "deficiency must be positive and finite");
  if (!(g.p_min > 0.0)) add("grid.p_min", "p_min must be positive");
  if (!(g.p_min <= g.p_max)) add("grid.p_max", "p_max must be at least p_min");
  if (!std::isfinite(g.total_price)) add("grid.total_price", "total price must be finite");

  if (g.cost_linear.size() != n)
    add("grid.cost_linear", "expected one coefficient per user");
  if (g.cost_const.size() != n)
    add("grid.cost_const", "expected one coefficient per user");
  for (std::size_t i = 0; i < g.cost_linear.size(); ++i) {
    if (!(g.cost_linear[i] > 0.0))
      add("grid.cost_linear[" + std::to_string(i) + "]", "a_i must be positive");
  }
  for (std::size_t i = 0; i < g.cost_const.size(); ++i) {
    if (!(g.cost_const[i] > 0.0))
      add("grid.cost_const[" + std::to_string(i) + "]", "b_i must be positive");
  }

  if (n > 0) {
    const double lo = static_cast<double>(n) * g.p_min;
    const double hi = static_cast<double>(n) * g.p_max;
    if (g.total_price < lo || g.total_price > hi) {
      std::ostringstream os;
      os << "total price " << g.total_price << " outside [N*p_min, N*p_max] = [" << lo << ", "
         << hi << "]";
      add("grid.total_price", os.str());
    }
  }
  return report;
}

std::optional<std::string> reconcile_price_floor(GridParams& grid, std::size_t n,
                                                 PriceFloorPolicy policy) {
  const double nd = static_cast<double>(n);
  if (n == 0 || nd * grid.p_min <= grid.total_price) return std::nullopt;
  std::ostringstream os;
  os << "N*p_min = " << nd * grid.p_min << " exceeds total price " << grid.total_price << "; ";
  if (policy == PriceFloorPolicy::kRaiseTotalPrice) {
    grid.total_price = nd * grid.p_min;
    os << "total price raised to " << grid.total_price;
  } else {
    grid.p_min = grid.total_price / nd;
    os << "p_min relaxed to " << grid.p_min;
  }
  return os.str();
}

std::string to_string(PriceFloorPolicy policy) {
  return policy == PriceFloorPolicy::kRaiseTotalPrice ? "raise_total_price" : "relax_p_min";
}

PriceFloorPolicy price_floor_policy_from_string(const std::string& name) {
  if (name == "raise_total_price") return PriceFloorPolicy::kRaiseTotalPrice;
  if (name == "relax_p_min") return PriceFloorPolicy::kRelaxMinPrice;
  throw std::invalid_argument("unknown price floor policy: " + name);
}

}  // namespace gridtrade
