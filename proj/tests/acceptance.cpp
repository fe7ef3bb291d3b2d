// Acceptance runner: one PASS/FAIL line per criterion with the measured
// values. `--only K` runs criterion K alone (1-based); exit status is nonzero
// if any executed criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gridtrade/engine.hpp"
#include "gridtrade/experiment.hpp"
#include "gridtrade/oracle.hpp"
#include "gridtrade/price_opt.hpp"
#include "gridtrade/projection.hpp"
#include "gridtrade/vi_solver.hpp"
#include "test_support.hpp"

using namespace gridtrade;
namespace fs = std::filesystem;

namespace {

constexpr int kCorpusSize = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[2048];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double inf_norm_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Seeded corpus: N cycles through 1..10, prices uniform in [8.45, 175] and
// the budget between 0.1 and 1.5 times the total surplus.
const std::vector<gridtrade::testing::RandomInstance>& corpus() {
  static const auto instances = [] {
    std::vector<gridtrade::testing::RandomInstance> v;
    v.reserve(kCorpusSize);
    for (int k = 0; k < kCorpusSize; ++k)
      v.push_back(gridtrade::testing::random_instance(static_cast<std::uint64_t>(k), 1 + k % 10));
    return v;
  }();
  return instances;
}

Outcome ve_oracle_equivalence() {
  double worst_closed = 0.0, worst_oracle = 0.0;
  int worst_case = -1, nonconverged = 0, binding = 0;
  for (int k = 0; k < kCorpusSize; ++k) {
    const auto& inst = corpus()[k];
    const PseudoGradient F(inst.scenario.surpluses(), inst.prices);
    const auto set = FeasibleSet::from_scenario(inst.scenario);
    const auto sol = solve_ve(F, set);
    if (!sol.converged()) ++nonconverged;
    const double gc = inf_norm_diff(sol.x, ve_closed_form(F, set));
    const double go = inf_norm_diff(sol.x, ve_oracle(inst.scenario, inst.prices));
    if (std::max(gc, go) > std::max(worst_closed, worst_oracle)) worst_case = k;
    worst_closed = std::max(worst_closed, gc);
    worst_oracle = std::max(worst_oracle, go);
    if (project_box_budget(std::vector<double>(F.surpluses().begin(), F.surpluses().end()), set).active_budget)
      ++binding;
  }
  return {nonconverged == 0 && worst_closed <= 1e-6 && worst_oracle <= 1e-6,
          fmt("scenarios=%d binding=%d nonconverged=%d max_gap_closed=%.3g max_gap_oracle=%.3g worst=%d",
              kCorpusSize, binding, nonconverged, worst_closed, worst_oracle, worst_case)};
}

Outcome price_kkt_and_lattice() {
  CounterRng rng(hash_key({0x6b6b74ULL}));
  double stationarity = 0.0, complementarity = 0.0;
  int with_zero = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(25);
    std::vector<double> x(n);
    bool zero = false;
    for (auto& v : x) {
      v = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.0, 240.0);
      zero = zero || v == 0.0;
    }
    with_zero += zero;
    auto g = gridtrade::testing::make_scenario(std::vector<double>(n, 1.0), 1.0).grid;
    g.total_price = rng.uniform(8.45 * n, 175.0 * n);
    for (auto& a : g.cost_linear) a = rng.uniform(0.0, 0.05);
    const auto sol = optimize_prices(x, g);
    const auto kkt = price_kkt_residuals(x, g, sol);
    stationarity = std::max(stationarity, kkt.stationarity);
    complementarity = std::max(complementarity, kkt.complementarity);
  }

  int lattice_better = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(3);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform() < 0.1 ? 0.0 : rng.uniform(1.0, 240.0);
    auto g = gridtrade::testing::make_scenario(std::vector<double>(n, 1.0), 1.0).grid;
    g.p_min = rng.uniform(8.45, 60.0);
    g.p_max = g.p_min + rng.uniform(0.5, 2.0);
    g.total_price = rng.uniform(g.p_min * n, g.p_max * n);
    for (auto& a : g.cost_linear) a = rng.uniform(0.0, 0.05);
    const auto sol = optimize_prices(x, g);
    const auto lattice = price_grid_oracle(x, g, 1e-3);
    const double excess = sol.cost - lattice.cost;
    worst_excess = std::max(worst_excess, excess);
    if (excess > 1e-9 * std::max(1.0, lattice.cost)) ++lattice_better;
  }
  return {stationarity <= 1e-7 && complementarity <= 1e-7 && lattice_better == 0,
          fmt("kkt_instances=1000 (with zero energy %d) max_stationarity=%.3g max_complementarity=%.3g "
              "lattice_instances=100 lattice_better=%d max_cost_minus_lattice=%.3g",
              with_zero, stationarity, complementarity, lattice_better, worst_excess)};
}

Outcome nse_stability() {
  int games = 0, violating = 0, nonconverged = 0;
  double follower = 0.0, leader = 0.0, regret = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto& s = corpus()[k].scenario;
    const auto game = run_stackelberg(s);
    if (!game.converged) {
      ++nonconverged;
      continue;
    }
    ++games;
    const auto r = check_nse(game, s, 10000, static_cast<std::uint64_t>(k));
    if (!r.ok()) ++violating;
    follower = std::max(follower, r.max_follower_gain);
    leader = std::max(leader, r.max_leader_saving);
    regret = std::max(regret, r.final_response_regret);
  }
  return {nonconverged == 0 && violating == 0,
          fmt("games=%d nonconverged=%d games_with_improvement=%d max_follower_gain=%.3g "
              "max_leader_saving=%.3g max_reprice_regret=%.3g",
              games, nonconverged, violating, follower, leader, regret)};
}

Outcome social_optimality() {
  double worst_utility_gap = 0.0, worst_audit = 0.0;
  int worst_case = -1;
  for (int k = 0; k < kCorpusSize; ++k) {
    const auto& inst = corpus()[k];
    const PseudoGradient F(inst.scenario.surpluses(), inst.prices);
    const auto sol = solve_ve(F, FeasibleSet::from_scenario(inst.scenario));
    const auto best = ve_oracle(inst.scenario, inst.prices);
    const double gap = std::abs(joint_utility(sol.x, inst.scenario, inst.prices) -
                                joint_utility(best, inst.scenario, inst.prices));
    if (gap > worst_utility_gap) worst_case = k;
    worst_utility_gap = std::max(worst_utility_gap, gap);
    const auto audit = social_optimality_audit(inst.scenario, sol.x, inst.prices, 1000,
                                               static_cast<std::uint64_t>(k));
    worst_audit = std::max(worst_audit, audit.max_abs_gap);
  }
  return {worst_utility_gap <= 1e-6 && worst_audit <= 1e-6,
          fmt("scenarios=%d max_joint_utility_gap=%.3g worst=%d max_sampled_excess=%.3g", kCorpusSize,
              worst_utility_gap, worst_case, worst_audit)};
}

Outcome convergence_preset() {
  const auto cfg = preset_config(Preset::kFig1Convergence);
  const auto s = sample_scenario(cfg, cfg.n_values.front(), 0).scenario;
  EngineOptions opts;
  opts.solver = cfg.solver;
  const auto game = run_stackelberg(s, opts);
  const int steps1 = static_cast<int>(game.stage1_trace.records.size()) - 1;
  const int steps2 = static_cast<int>(game.stage2_trace.records.size()) - 1;
  const double residual = std::max(game.stage1.vi_residual, game.stage2.vi_residual);

  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.users[a].surplus < s.users[b].surplus; });
  int inversions = 0;
  for (std::size_t k = 1; k < order.size(); ++k)
    if (!(game.stage2.utilities[order[k]] > game.stage2.utilities[order[k - 1]])) ++inversions;

  std::string pairs;
  for (auto i : order) pairs += fmt(" E=%.2f:U=%.2f", s.users[i].surplus, game.stage2.utilities[i]);
  const bool ok = game.converged && residual <= 1e-8 && steps1 + steps2 <= 20 && inversions == 0;
  return {ok, fmt("converged=%s residual=%.3g iterations=%d+%d ordering_inversions=%d by_surplus:%s",
                  game.converged ? "yes" : "no", residual, steps1, steps2, inversions, pairs.c_str())};
}

const SummaryRow* find_row(const std::vector<SummaryRow>& rows, int n, const char* scheme, const char* metric) {
  for (const auto& r : rows)
    if (r.n == n && r.scheme == scheme && r.metric == metric) return &r;
  return nullptr;
}

Outcome utility_trend() {
  auto cfg = preset_config(Preset::kFig2UtilityVsN);
  cfg.workers = 0;
  ExperimentResult result;
  render_experiment(cfg, result);
  bool above = true, nsg_nonincreasing = true, fit_nonincreasing = true;
  double prev_nsg = std::numeric_limits<double>::infinity(), prev_fit = prev_nsg;
  std::string series;
  for (int n : cfg.n_values) {
    const double nsg = find_row(result.summary, n, "NSG", "utility")->mean;
    const double fit = find_row(result.summary, n, "FIT", "utility")->mean;
    above = above && nsg > fit;
    nsg_nonincreasing = nsg_nonincreasing && nsg <= prev_nsg;
    fit_nonincreasing = fit_nonincreasing && fit <= prev_fit;
    prev_nsg = nsg;
    prev_fit = fit;
    series += fmt(" n=%d:NSG=%.1f,FIT=%.1f,ratio=%.3f", n, nsg, fit, nsg / fit);
  }
  return {above && nsg_nonincreasing && fit_nonincreasing,
          fmt("nsg_above_fit=%s nsg_nonincreasing=%s fit_nonincreasing=%s%s", above ? "yes" : "no",
              nsg_nonincreasing ? "yes" : "no", fit_nonincreasing ? "yes" : "no", series.c_str())};
}

Outcome cost_trend() {
  auto cfg = preset_config(Preset::kFig3CostVsN);
  cfg.workers = 0;
  ExperimentResult result;
  render_experiment(cfg, result);
  std::vector<double> nsg;
  std::string series;
  for (int n : cfg.n_values) {
    const double c = find_row(result.summary, n, "NSG", "quadratic")->mean;
    const double f = find_row(result.summary, n, "FIT", "quadratic")->mean;
    nsg.push_back(c);
    series += fmt(" n=%d:NSG=%.4g,FIT=%.4g", n, c, f);
  }
  const auto argmin = static_cast<std::size_t>(std::min_element(nsg.begin(), nsg.end()) - nsg.begin());
  const bool interior = argmin > 0 && argmin + 1 < nsg.size();
  const double nsg10 = find_row(result.summary, 10, "NSG", "quadratic")->mean;
  const double fit10 = find_row(result.summary, 10, "FIT", "quadratic")->mean;
  const double pay10 = find_row(result.summary, 10, "NSG", "payment")->mean;
  const double fitpay10 = find_row(result.summary, 10, "FIT", "payment")->mean;
  return {interior && nsg10 <= fit10,
          fmt("interior_minimum=%s at_n=%d nsg_le_fit_at_10=%s ratio_at_10=%.3f payment_ratio_at_10=%.3f%s",
              interior ? "yes" : "no", cfg.n_values[argmin], nsg10 <= fit10 ? "yes" : "no", nsg10 / fit10,
              pay10 / fitpay10, series.c_str())};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "gridtrade_acceptance_determinism";
  int files = 0, differing = 0;
  for (auto preset : {Preset::kFig1Convergence, Preset::kFig2UtilityVsN, Preset::kFig3CostVsN, Preset::kCustom}) {
    std::vector<std::vector<fs::path>> written;
    for (int rep = 0; rep < 2; ++rep) {
      auto cfg = preset_config(preset);
      cfg.dump_runs = true;
      cfg.workers = rep == 0 ? 1 : 0;
      cfg.output_path = (root / (to_string(preset) + "_" + std::to_string(rep))).string();
      fs::remove_all(cfg.output_path);
      written.push_back(run_experiment(cfg).written);
    }
    for (std::size_t f = 0; f < written[0].size(); ++f) {
      ++files;
      if (slurp(written[0][f]) != slurp(written[1][f])) ++differing;
    }
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0, fmt("presets=4 files_compared=%d differing=%d", files, differing)};
}

Outcome fejer_monotonicity() {
  int solves = 0, violations = 0;
  double worst_increase = -std::numeric_limits<double>::infinity();
  long long records = 0;
  for (int k = 0; k < kCorpusSize; ++k) {
    const auto& inst = corpus()[k];
    const PseudoGradient F(inst.scenario.surpluses(), inst.prices);
    const auto set = FeasibleSet::from_scenario(inst.scenario);
    const auto x_star = ve_closed_form(F, set);

    CounterRng rng(hash_key({static_cast<std::uint64_t>(k), 0x66656aULL}));
    std::vector<double> start(inst.scenario.size());
    for (auto& v : start) v = rng.uniform(0.0, 240.0);
    const auto random_start = project_box_budget(start, set).point;

    for (const auto& x0 : {std::vector<double>(inst.scenario.size(), 0.0), random_start}) {
      const auto sol = solve_ve(F, set, SSConfig{}, x0);
      ++solves;
      double prev = std::numeric_limits<double>::infinity();
      for (const auto& rec : sol.trace.records) {
        const double d = distance(rec.x, x_star);
        if (std::isfinite(prev)) worst_increase = std::max(worst_increase, d - prev);
        if (d > prev + 1e-12) ++violations;
        prev = d;
        ++records;
      }
    }
  }
  return {violations == 0, fmt("solves=%d iterates=%lld violations=%d max_increase=%.3g", solves, records,
                               violations, worst_increase)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
  double time_limit = 0.0;  // seconds, 0 when unbounded
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"ve_oracle_equivalence", ve_oracle_equivalence, 60.0},
      {"price_kkt_and_lattice", price_kkt_and_lattice, 30.0},
      {"nse_stability", nse_stability, 120.0},
      {"social_optimality", social_optimality},
      {"convergence_preset", convergence_preset},
      {"utility_trend", utility_trend},
      {"cost_trend", cost_trend},
      {"determinism", determinism},
      {"fejer_monotonicity", fejer_monotonicity},
  };

  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only K]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "--only must be between 1 and %zu\n", criteria.size());
    return 2;
  }

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only != 0 && static_cast<int>(k) + 1 != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criteria[k].time_limit > 0.0 && secs > criteria[k].time_limit) {
      o.pass = false;
      o.detail += fmt(" over_time_limit=%.0fs", criteria[k].time_limit);
    }
    std::printf("%s %d %s %s time=%.2fs\n", o.pass ? "PASS" : "FAIL", static_cast<int>(k) + 1,
                criteria[k].name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
