#pragma once

// Slow, independent verifiers for tests and audits. The production path
// never calls these.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridtrade/model.hpp"

namespace gridtrade {

struct OracleReport {
  double max_abs_gap = 0.0;
  std::string argmax_case;  // which sample or scenario produced the gap
  int trials = 0;
};

/// Maximizes the joint utility over the feasible set by projected-gradient
/// ascent with diminishing steps, stopping when the gradient-mapping norm
/// falls to tol.
std::vector<double> ve_oracle(const Scenario& s, std::span<const double> prices,
                              double tol = 1e-10);

/// Draws `samples` feasible points (uniform in the box or perturbed around
/// x_star, then scaled into the budget) and reports the largest joint-utility
/// excess over x_star.
OracleReport social_optimality_audit(const Scenario& s, std::span<const double> x_star,
                                     std::span<const double> prices, int samples,
                                     std::uint64_t seed = 0);

}  // namespace gridtrade
