#include "gridtrade/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gridtrade/projection.hpp"
#include "gridtrade/rng.hpp"

namespace gridtrade {

std::vector<double> ve_oracle(const Scenario& s, std::span<const double> prices, double tol) {
  const std::size_t n = s.size();
  if (prices.size() != n) throw std::invalid_argument("ve_oracle: price vector length mismatch");
  const auto set = FeasibleSet::from_scenario(s);
  const auto surpluses = s.surpluses();

  std::vector<double> x(n, 0.0), y(n);
  constexpr int kMaxIterations = 1000000;
  for (int k = 0; k < kMaxIterations; ++k) {
    const double step = 0.5 / (1.0 + k / 100.0);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + step * (surpluses[i] - x[i] + prices[i]);
    auto next = project_box_budget(y, set).point;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (next[i] - x[i]) * (next[i] - x[i]);
    x = std::move(next);
    if (std::sqrt(sq) / step <= tol) return x;
  }
  throw std::runtime_error("ve_oracle: gradient mapping did not reach tolerance");
}

OracleReport social_optimality_audit(const Scenario& s, std::span<const double> x_star,
                                     std::span<const double> prices, int samples,
                                     std::uint64_t seed) {
  const std::size_t n = s.size();
  if (x_star.size() != n || prices.size() != n)
    throw std::invalid_argument("social_optimality_audit: vector length mismatch");
  const auto set = FeasibleSet::from_scenario(s);
  if (!set.contains(x_star)) throw std::invalid_argument("social_optimality_audit: x_star is infeasible");

  OracleReport report;
  report.trials = std::max(samples, 0);
  const auto surpluses = s.surpluses();
  const double base = joint_utility(x_star, surpluses, prices);
  CounterRng rng(hash_key({seed, s.seed, 0x736f63ULL}));

  std::vector<double> w(n);
  for (int t = 0; t < samples; ++t) {
    if (t % 2 == 0) {
      for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(0.0, surpluses[i]);
    } else {
      const double scale = std::pow(10.0, rng.uniform(-6.0, 1.0));
      for (std::size_t i = 0; i < n; ++i)
        w[i] = std::clamp(x_star[i] + scale * rng.normal(), 0.0, surpluses[i]);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total > set.budget()) {
      const double ratio = set.budget() / total;
      for (auto& v : w) v *= ratio;
    }
    const double gap = joint_utility(w, surpluses, prices) - base;
    if (gap > report.max_abs_gap) {
      report.max_abs_gap = gap;
      report.argmax_case = "sample " + std::to_string(t);
    }
  }
  return report;
}

}  // namespace gridtrade
