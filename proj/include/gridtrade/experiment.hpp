#pragma once

// Seeded Monte Carlo sweeps over the user count and CSV emission.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridtrade/engine.hpp"
#include "gridtrade/model.hpp"

namespace gridtrade {

enum class Preset { kFig1Convergence, kFig2UtilityVsN, kFig3CostVsN, kCustom };

std::string to_string(Preset preset);
Preset preset_from_string(const std::string& name);

/// How the grid deficiency is set for a sampled scenario.
struct DeficiencyRule {
  enum class Kind { kProportional, kFixed };
  Kind kind = Kind::kProportional;
  double factor = 0.5;  // kProportional: factor * n * midpoint of surplus_range
  double value = 0.0;   // kFixed: deficiency in kWh
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Preset preset = Preset::kFig2UtilityVsN;
  std::vector<int> n_values{5, 10, 15, 20, 25};
  int runs = 100;
  double surplus_low = 64.0;
  double surplus_high = 240.0;
  double total_price = 175.0;
  double p_min = 8.45;
  double p_max = 175.0;
  double fit_tariff = 60.0;
  double cost_linear = 0.01;
  double cost_const = 1.0;
  int aggregation_count = 20;
  DeficiencyRule deficiency_rule;
  PriceFloorPolicy price_floor = PriceFloorPolicy::kRaiseTotalPrice;
  std::uint64_t seed = 1;
  std::string output_path = ".";
  int workers = 1;         // 0 picks the hardware concurrency
  bool dump_runs = false;  // also write one row per (n, run, scheme)
  SSConfig solver;

  /// Throws ConfigError naming every offending field.
  void validate() const;
};

/// Defaults of a preset: the convergence preset plays one 5-user game, the sweeps use
/// n in {5, 10, 15, 20, 25} with 100 runs each.
ExperimentConfig preset_config(Preset preset);

/// JSON round-trip. Field names are the kebab-case forms of the members
/// above; missing fields keep the preset defaults.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

struct SampledScenario {
  Scenario scenario;
  std::vector<std::string> warnings;
};

/// Draws surpluses from a counter-based generator keyed by (seed, n,
/// run_index), so any single scenario is reproducible on its own.
SampledScenario sample_scenario(const ExperimentConfig& cfg, int n, int run_index);

struct RunRecord {
  int n = 0;
  int run_index = 0;
  double nsg_utility_per_user = 0.0;
  double fit_utility_per_user = 0.0;
  double nsg_cost = 0.0;          // quadratic cost at the final prices
  double nsg_payment = 0.0;       // sum p_i x_i
  double fit_cost = 0.0;          // quadratic cost at the tariff
  double fit_payment = 0.0;       // tariff * energy bought
  int stage1_iterations = 0;
  int stage2_iterations = 0;
};

struct SummaryRow {
  int n = 0;
  std::string scheme;
  std::string metric;  // "utility", "quadratic" or "payment"
  double mean = 0.0;
  double std = 0.0;    // sample standard deviation, 0 for a single run
};

struct ExperimentResult {
  std::vector<RunRecord> runs;  // ordered by (n, run_index)
  std::vector<SummaryRow> summary;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> written;
};

/// Runs the preset and writes its CSV files into cfg.output_path. Files are
/// written to a temporary name and renamed; nothing is written when any game
/// fails to converge (NonConvergenceError).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Same computation without touching the file system. Returns the CSV texts
/// keyed by file name.
std::vector<std::pair<std::string, std::string>> render_experiment(const ExperimentConfig& cfg,
                                                                   ExperimentResult& result);

/// Scenario documents: {"seed", "users": [{"id", "surplus",
/// "aggregation-count"}], "grid": {"deficiency", "total-price", "p-min",
/// "p-max", "cost-linear": [...], "cost-const": [...]}}.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

/// Build identifier recorded in CSV headers.
std::string build_id();

}  // namespace gridtrade
