#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridtrade/engine.hpp"
#include "gridtrade/experiment.hpp"
#include "gridtrade/oracle.hpp"
#include "gridtrade/price_opt.hpp"
#include "gridtrade/vi_solver.hpp"

namespace fs = std::filesystem;
using namespace gridtrade;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNonConvergence = 2;

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::string out;
  std::optional<int> workers;
  bool dump_runs = false;
};

int simulate(const SimulateArgs& a) {
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
    if (!a.preset.empty()) cfg.preset = preset_from_string(a.preset);
  } else {
    cfg = preset_config(a.preset.empty() ? Preset::kFig2UtilityVsN : preset_from_string(a.preset));
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.runs) cfg.runs = *a.runs;
  if (!a.out.empty()) cfg.output_path = a.out;
  if (a.workers) cfg.workers = *a.workers;
  if (a.dump_runs) cfg.dump_runs = true;

  const auto result = run_experiment(cfg);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& p : result.written) std::cout << p.string() << "\n";
  return kExitOk;
}

struct AuditLine {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool ok() const { return value <= limit; }
};

int verify(const std::string& corpus, int trials) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no scenario files in " << corpus << "\n";
    return kExitInvalid;
  }

  int failures = 0;
  bool nonconverged = false;
  for (const auto& f : files) {
    Scenario s;
    try {
      s = scenario_from_json(read_file(f));
    } catch (const std::exception& e) {
      std::cout << f.filename().string() << " INVALID " << e.what() << "\n";
      ++failures;
      continue;
    }
    if (auto report = validate_scenario(s); !report.ok()) {
      std::cout << f.filename().string() << " INVALID " << report.summary() << "\n";
      ++failures;
      continue;
    }
    const auto game = run_stackelberg(s);
    if (!game.converged) {
      std::cout << f.filename().string() << " NONCONVERGED\n";
      nonconverged = true;
      continue;
    }

    const auto& x = game.stage2.energies;
    const auto& p = game.stage2.prices;
    const auto set = FeasibleSet::from_scenario(s);
    const auto closed = ve_closed_form(PseudoGradient(s.surpluses(), p), set);
    const auto oracle = ve_oracle(s, p);
    double gap_closed = 0.0, gap_oracle = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gap_closed = std::max(gap_closed, std::abs(x[i] - closed[i]));
      gap_oracle = std::max(gap_oracle, std::abs(x[i] - oracle[i]));
    }
    const auto social = social_optimality_audit(s, x, p, trials, s.seed);
    const auto nse = check_nse(game, s, trials, s.seed);
    const auto kkt = price_kkt_residuals(game.offered_energies, s.grid, game.pricing);

    const std::vector<AuditLine> lines = {
        {"closed_form_gap", gap_closed, 1e-6},
        {"oracle_gap", gap_oracle, 1e-6},
        {"social_gap", social.max_abs_gap, 1e-6},
        {"nse_follower_gain", nse.max_follower_gain, 1e-6},
        {"nse_leader_saving", nse.max_leader_saving, 1e-6},
        {"kkt_stationarity", kkt.stationarity, 1e-7},
        {"kkt_complementarity", kkt.complementarity, 1e-7},
    };
    bool ok = true;
    std::string detail;
    char buf[96];
    for (const auto& l : lines) {
      ok = ok && l.ok();
      std::snprintf(buf, sizeof buf, " %s=%.3g", l.name.c_str(), l.value);
      detail += buf;
    }
    std::cout << f.filename().string() << (ok ? " OK" : " FAIL") << detail << "\n";
    if (!ok) ++failures;
  }
  std::cout << files.size() << " scenarios, " << failures << " failed\n";
  if (nonconverged) return kExitNonConvergence;
  return failures == 0 ? kExitOk : kExitInvalid;
}

int write_corpus(const std::string& out, int count, std::uint64_t seed) {
  fs::create_directories(out);
  ExperimentConfig cfg;
  cfg.seed = seed;
  for (int k = 0; k < count; ++k) {
    const int n = 1 + k % 10;
    auto s = sample_scenario(cfg, n, k).scenario;
    char name[32];
    std::snprintf(name, sizeof name, "scenario_%04d.json", k);
    std::ofstream os(fs::path(out) / name);
    os << scenario_to_json(s) << "\n";
    if (!os) throw std::runtime_error("cannot write scenario file");
  }
  std::cout << count << " scenarios written to " << out << "\n";
  return kExitOk;
}

int play(const std::string& scenario_path, const std::string& log_path, const std::string& trace_path) {
  const auto s = scenario_from_json(read_file(scenario_path));
  const auto game = run_stackelberg(s);
  if (!log_path.empty()) {
    std::ofstream os(log_path);
    game.log.write_json_lines(os);
  }
  if (!trace_path.empty()) {
    std::ofstream os(trace_path, std::ios::binary);
    game.stage2_trace.write_csv(os);
  }
  std::printf("converged %s, rounds %d\n", game.converged ? "yes" : "no", game.log.total_rounds());
  std::printf("%4s %12s %12s %12s %14s\n", "eu", "surplus", "energy", "price", "utility");
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::printf("%4d %12.6f %12.6f %12.6f %14.6f\n", s.users[i].id, s.users[i].surplus,
                game.stage2.energies[i], game.stage2.prices[i], game.stage2.utilities[i]);
  }
  std::printf("grid cost %.6f\n", game.stage2.grid_cost);
  return game.converged ? kExitOk : kExitNonConvergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg energy-trading simulator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  std::uint64_t seed_value = 0;
  int runs_value = 0;
  int workers_value = 0;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a Monte Carlo preset and write CSV files");
  simulate_cmd->add_option("--config", sim.config, "JSON experiment config")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--preset", sim.preset, "fig1_convergence, fig2_utility_vs_n, fig3_cost_vs_n or custom");
  auto* seed_opt = simulate_cmd->add_option("--seed", seed_value, "RNG seed");
  auto* runs_opt = simulate_cmd->add_option("--runs", runs_value, "Monte Carlo runs per n");
  simulate_cmd->add_option("--out", sim.out, "Output directory");
  auto* workers_opt = simulate_cmd->add_option("--workers", workers_value, "Worker threads, 0 for all cores");
  simulate_cmd->add_flag("--dump-runs", sim.dump_runs, "Also write per-run rows");

  std::string corpus;
  int trials = 10000;
  auto* verify_cmd = app.add_subcommand("verify", "Audit every scenario in a corpus directory");
  verify_cmd->add_option("--corpus", corpus, "Directory of scenario JSON files")->required()->check(CLI::ExistingDirectory);
  verify_cmd->add_option("--trials", trials, "Random deviations per audit");

  std::string corpus_out;
  int corpus_count = 1000;
  std::uint64_t corpus_seed = 1;
  auto* corpus_cmd = app.add_subcommand("corpus", "Write sampled scenario JSON files");
  corpus_cmd->add_option("--out", corpus_out, "Output directory")->required();
  corpus_cmd->add_option("--count", corpus_count, "Number of scenarios");
  corpus_cmd->add_option("--seed", corpus_seed, "RNG seed");

  std::string scenario_path, log_path, trace_path;
  auto* play_cmd = app.add_subcommand("play", "Play one game and print the equilibrium");
  play_cmd->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  play_cmd->add_option("--log", log_path, "Write the message log as JSON lines");
  play_cmd->add_option("--trace", trace_path, "Write the stage-2 solver trace as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate_cmd) {
      if (seed_opt->count()) sim.seed = seed_value;
      if (runs_opt->count()) sim.runs = runs_value;
      if (workers_opt->count()) sim.workers = workers_value;
      return simulate(sim);
    }
    if (*verify_cmd) return verify(corpus, trials);
    if (*corpus_cmd) return write_corpus(corpus_out, corpus_count, corpus_seed);
    if (*play_cmd) return play(scenario_path, log_path, trace_path);
  } catch (const NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const PriceInfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}
