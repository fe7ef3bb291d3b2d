#pragma once

// Domain types of the grid/energy-user trading game and the closed-form
// utility and cost functionals both sides optimize.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridtrade {

/// An aggregated group of prosumers with surplus energy for sale (kWh).
struct EnergyUser {
  int id = 0;
  double surplus = 0.0;
  int aggregation_count = 1;  // informational only
};

/// Leader-side parameters: deficiency (kWh), total price and per-user price
/// bounds (cents/kWh), and the per-user cost coefficients a_i, b_i.
struct GridParams {
  double deficiency = 0.0;
  double total_price = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  std::vector<double> cost_linear;
  std::vector<double> cost_const;
};

struct Scenario {
  std::vector<EnergyUser> users;
  GridParams grid;
  std::uint64_t seed = 0;

  std::size_t size() const { return users.size(); }
  std::vector<double> surpluses() const;
};

/// The coupled strategy set {x : 0 <= x_i <= upper_i, sum x_i <= budget}.
class FeasibleSet {
 public:
  FeasibleSet(std::vector<double> upper_bounds, double budget);

  static FeasibleSet from_scenario(const Scenario& s);

  std::span<const double> upper_bounds() const { return upper_; }
  double budget() const { return budget_; }
  std::size_t size() const { return upper_.size(); }

  bool contains(std::span<const double> x, double tol = 1e-9) const;

 private:
  std::vector<double> upper_;
  double budget_;
};

struct EquilibriumResult {
  std::vector<double> energies;
  std::vector<double> prices;
  std::vector<double> utilities;
  double total_utility = 0.0;
  double grid_cost = 0.0;
  int follower_iterations = 0;
  double vi_residual = 0.0;
  std::vector<double> mu_values;
};

/// Evaluates utilities, cost and slack values for a given (x, p).
EquilibriumResult make_equilibrium_result(const Scenario& s, std::vector<double> energies,
                                          std::vector<double> prices, int follower_iterations,
                                          double vi_residual);

/// U(x, E, p) = E x - x^2 / 2 + p x.
double eu_utility(double x, double surplus, double price);

double joint_utility(std::span<const double> x, std::span<const double> surpluses,
                     std::span<const double> prices);
double joint_utility(std::span<const double> x, const Scenario& s, std::span<const double> prices);

/// Sum over users of x_i p_i^2 + a_i p_i + b_i.
double grid_cost(std::span<const double> prices, std::span<const double> x, const GridParams& grid);

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate_scenario(const Scenario& s);

/// How to restore N * p_min <= P_r when a scenario has too many users for the
/// announced total price.
enum class PriceFloorPolicy {
  kRaiseTotalPrice,  // keep the mandatory floor, set P_r = N * p_min
  kRelaxMinPrice,    // keep P_r, set p_min = P_r / N
};

/// Adjusts the grid so that N * p_min <= P_r holds. Returns a description of
/// the adjustment, or nullopt if none was needed.
std::optional<std::string> reconcile_price_floor(GridParams& grid, std::size_t n,
                                                 PriceFloorPolicy policy);

std::string to_string(PriceFloorPolicy policy);
PriceFloorPolicy price_floor_policy_from_string(const std::string& name);

}  // namespace gridtrade
