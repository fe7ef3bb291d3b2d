#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gridtrade/experiment.hpp"

using namespace gridtrade;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small(Preset preset) {
  auto cfg = preset_config(preset);
  if (preset != Preset::kFig1Convergence) {
    cfg.n_values = {5, 10};
    cfg.runs = 4;
  }
  return cfg;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("gridtrade_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> data_rows(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(csv);
  std::string line;
  int index = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (index++ < 2) continue;  // config header and column names
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Preset, NamesRoundTrip) {
  for (auto p : {Preset::kFig1Convergence, Preset::kFig2UtilityVsN, Preset::kFig3CostVsN, Preset::kCustom})
    EXPECT_EQ(preset_from_string(to_string(p)), p);
  EXPECT_THROW(preset_from_string("fig4"), ConfigError);
}

TEST(PresetConfig, Defaults) {
  const auto convergence = preset_config(Preset::kFig1Convergence);
  EXPECT_EQ(convergence.n_values, std::vector<int>{5});
  EXPECT_EQ(convergence.runs, 1);
  const auto sweep = preset_config(Preset::kFig2UtilityVsN);
  EXPECT_EQ(sweep.n_values, (std::vector<int>{5, 10, 15, 20, 25}));
  EXPECT_EQ(sweep.runs, 100);
  EXPECT_DOUBLE_EQ(sweep.total_price, 175.0);
  EXPECT_DOUBLE_EQ(sweep.p_min, 8.45);
  EXPECT_DOUBLE_EQ(sweep.fit_tariff, 60.0);
}

TEST(ExperimentConfig, ValidateListsEveryProblem) {
  ExperimentConfig cfg;
  cfg.runs = 0;
  cfg.surplus_low = 300.0;
  cfg.fit_tariff = -1.0;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("runs"), std::string::npos) << what;
    EXPECT_NE(what.find("surplus"), std::string::npos) << what;
    EXPECT_NE(what.find("fit"), std::string::npos) << what;
  }
}

TEST(ConfigJson, RoundTrip) {
  auto cfg = preset_config(Preset::kFig3CostVsN);
  cfg.seed = 99;
  cfg.n_values = {3, 7};
  cfg.price_floor = PriceFloorPolicy::kRelaxMinPrice;
  cfg.deficiency_rule.kind = DeficiencyRule::Kind::kFixed;
  cfg.deficiency_rule.value = 321.0;
  cfg.solver.beta = 0.7;
  const auto text = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(text)), text);
}

TEST(ConfigJson, MissingFieldsKeepPresetDefaults) {
  const auto cfg = config_from_json(R"({"preset": "fig1_convergence", "seed": 5})");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.runs, 1);
  EXPECT_EQ(cfg.n_values, std::vector<int>{5});
}

TEST(ConfigJson, RejectsUnknownAndMalformed) {
  EXPECT_THROW(config_from_json(R"({"sed": 5})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"runs": "many"})"), ConfigError);
  EXPECT_THROW(config_from_json("not json"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"deficiency-rule": {"kind": "random"}})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(SampleScenario, DefaultsAtFiveUsers) {
  const auto sampled = sample_scenario(ExperimentConfig{}, 5, 0);
  const auto& s = sampled.scenario;
  ASSERT_EQ(s.size(), 5u);
  EXPECT_DOUBLE_EQ(s.grid.total_price, 175.0);
  EXPECT_DOUBLE_EQ(s.grid.total_price / 5.0, 35.0);
  EXPECT_DOUBLE_EQ(s.grid.deficiency, 0.5 * 5 * 152.0);
  EXPECT_TRUE(sampled.warnings.empty());
  for (const auto& u : s.users) {
    EXPECT_GE(u.surplus, 64.0);
    EXPECT_LT(u.surplus, 240.0);
    EXPECT_EQ(u.aggregation_count, 20);
  }
}

TEST(SampleScenario, ReproducibleAndIndependentPerRun) {
  ExperimentConfig cfg;
  const auto a = sample_scenario(cfg, 10, 3).scenario;
  const auto b = sample_scenario(cfg, 10, 3).scenario;
  const auto c = sample_scenario(cfg, 10, 4).scenario;
  EXPECT_EQ(a.surpluses(), b.surpluses());
  EXPECT_NE(a.surpluses(), c.surpluses());
  cfg.seed = 2;
  EXPECT_NE(sample_scenario(cfg, 10, 3).scenario.surpluses(), a.surpluses());
}

TEST(SampleScenario, PriceFloorPolicies) {
  ExperimentConfig cfg;
  const auto raised = sample_scenario(cfg, 25, 0);
  EXPECT_NEAR(raised.scenario.grid.total_price, 211.25, 1e-12);
  EXPECT_DOUBLE_EQ(raised.scenario.grid.p_min, 8.45);
  ASSERT_EQ(raised.warnings.size(), 1u);

  cfg.price_floor = PriceFloorPolicy::kRelaxMinPrice;
  const auto relaxed = sample_scenario(cfg, 25, 0);
  EXPECT_NEAR(relaxed.scenario.grid.p_min, 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(relaxed.scenario.grid.total_price, 175.0);
  ASSERT_EQ(relaxed.warnings.size(), 1u);
  EXPECT_NE(relaxed.warnings[0].find("7"), std::string::npos);
}

TEST(ScenarioJson, RoundTrip) {
  const auto s = sample_scenario(ExperimentConfig{}, 7, 2).scenario;
  const auto back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.surpluses(), s.surpluses());
  EXPECT_EQ(back.grid.cost_linear, s.grid.cost_linear);
  EXPECT_EQ(back.grid.deficiency, s.grid.deficiency);
  EXPECT_THROW(scenario_from_json(R"({"users": []})"), ConfigError);
}

TEST(RenderExperiment, DeterministicAcrossWorkerCounts) {
  auto cfg = small(Preset::kFig2UtilityVsN);
  ExperimentResult a, b;
  cfg.workers = 1;
  const auto fa = render_experiment(cfg, a);
  cfg.workers = 4;
  const auto fb = render_experiment(cfg, b);
  EXPECT_EQ(fa, fb);
}

TEST(RenderExperiment, ConvergenceFileHasEveryUserEachIteration) {
  ExperimentResult r;
  const auto files = render_experiment(preset_config(Preset::kFig1Convergence), r);
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0].first, "fig1_convergence.csv");
  const auto rows = data_rows(files[0].second);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.size() % 5, 0u);
  EXPECT_EQ(rows[0][0], "0");
  EXPECT_EQ(files[0].second.rfind("# config=", 0), 0u);
  EXPECT_NE(files[0].second.find("iteration,eu_id,surplus,utility\r\n"), std::string::npos);
}

TEST(RenderExperiment, CostFileCarriesBothAccountings) {
  ExperimentResult r;
  const auto files = render_experiment(small(Preset::kFig3CostVsN), r);
  ASSERT_EQ(files.size(), 1u);
  const auto rows = data_rows(files[0].second);
  EXPECT_EQ(rows.size(), 2u * 4u);
  std::map<std::string, int> variants;
  for (const auto& row : rows) {
    ASSERT_EQ(row.size(), 5u);
    ++variants[row[1] + "/" + row[4]];
  }
  EXPECT_EQ(variants["NSG/quadratic"], 2);
  EXPECT_EQ(variants["FIT/quadratic"], 2);
  EXPECT_EQ(variants["NSG/payment"], 2);
  EXPECT_EQ(variants["FIT/payment"], 2);
}

TEST(RenderExperiment, SummaryRecomputableFromRunDump) {
  auto cfg = small(Preset::kFig2UtilityVsN);
  cfg.dump_runs = true;
  ExperimentResult r;
  const auto files = render_experiment(cfg, r);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[1].first, "fig2_utility_vs_n_runs.csv");

  std::map<std::pair<int, std::string>, std::vector<double>> by_n;
  for (const auto& row : data_rows(files[1].second)) {
    by_n[{std::stoi(row[0]), "NSG"}].push_back(std::stod(row[2]));
    by_n[{std::stoi(row[0]), "FIT"}].push_back(std::stod(row[3]));
  }
  for (const auto& row : data_rows(files[0].second)) {
    const auto& v = by_n[{std::stoi(row[0]), row[1]}];
    ASSERT_EQ(v.size(), 4u);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= 4.0;
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    EXPECT_NEAR(std::stod(row[2]), mean, 1e-12 * std::abs(mean));
    EXPECT_NEAR(std::stod(row[3]), std::sqrt(sq / 3.0), 1e-12 * std::abs(mean));
  }
}

TEST(RunExperiment, WritesFilesAtomically) {
  auto cfg = small(Preset::kCustom);
  const auto dir = scratch("custom");
  cfg.output_path = dir.string();
  const auto result = run_experiment(cfg);
  ASSERT_EQ(result.written.size(), 2u);
  for (const auto& p : result.written) {
    EXPECT_TRUE(fs::exists(p));
    EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
  }
  EXPECT_TRUE(fs::exists(dir / "custom_utility_vs_n.csv"));
  EXPECT_TRUE(fs::exists(dir / "custom_cost_vs_n.csv"));
  fs::remove_all(dir);
}

TEST(RunExperiment, ByteIdenticalAcrossOutputDirectories) {
  auto cfg = small(Preset::kFig3CostVsN);
  const auto d1 = scratch("a"), d2 = scratch("b");
  cfg.output_path = d1.string();
  run_experiment(cfg);
  cfg.output_path = d2.string();
  cfg.workers = 3;
  run_experiment(cfg);
  EXPECT_EQ(slurp(d1 / "fig3_cost_vs_n.csv"), slurp(d2 / "fig3_cost_vs_n.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(RunExperiment, NonConvergenceWritesNothing) {
  auto cfg = small(Preset::kFig2UtilityVsN);
  cfg.solver.max_iterations = 1;
  cfg.solver.gamma = 0.1;
  const auto dir = scratch("nonconv");
  cfg.output_path = dir.string();
  EXPECT_THROW(run_experiment(cfg), NonConvergenceError);
  EXPECT_FALSE(fs::exists(dir / "fig2_utility_vs_n.csv"));
  fs::remove_all(dir);
}

TEST(BuildId, NonEmpty) { EXPECT_FALSE(build_id().empty()); }
