#include "gridtrade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gridtrade/rng.hpp"

#ifndef GRIDTRADE_BUILD_ID
#define GRIDTRADE_BUILD_ID "unknown"
#endif

namespace gridtrade {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string deficiency_kind_name(DeficiencyRule::Kind k) {
  return k == DeficiencyRule::Kind::kProportional ? "proportional" : "fixed";
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct RunOutput {
  RunRecord record;
  std::vector<std::string> warnings;
  GameOutcome game;  // kept only for the convergence preset
};

RunOutput play_run(const ExperimentConfig& cfg, int n, int run_index, bool keep_game) {
  auto sampled = sample_scenario(cfg, n, run_index);
  const Scenario& s = sampled.scenario;
  EngineOptions opts;
  opts.solver = cfg.solver;
  auto game = run_stackelberg(s, opts);
  if (!game.converged)
    throw NonConvergenceError("game did not converge for n = " + std::to_string(n) +
                              ", run " + std::to_string(run_index));
  const auto fit = run_fit(s, cfg.fit_tariff);

  RunOutput out;
  auto& r = out.record;
  const double nd = static_cast<double>(n);
  r.n = n;
  r.run_index = run_index;
  r.nsg_utility_per_user = game.stage2.total_utility / nd;
  r.fit_utility_per_user = fit.result.total_utility / nd;
  r.nsg_cost = game.stage2.grid_cost;
  r.nsg_payment = std::inner_product(game.stage2.prices.begin(), game.stage2.prices.end(),
                                     game.stage2.energies.begin(), 0.0);
  r.fit_cost = fit.tariff_cost;
  r.fit_payment = fit.payment_cost;
  r.stage1_iterations = game.stage1.follower_iterations;
  r.stage2_iterations = game.stage2.follower_iterations;
  out.warnings = std::move(sampled.warnings);
  if (keep_game) out.game = std::move(game);
  return out;
}

std::vector<RunOutput> play_all(const ExperimentConfig& cfg, bool keep_game) {
  std::vector<std::pair<int, int>> tasks;
  for (int n : cfg.n_values)
    for (int r = 0; r < cfg.runs; ++r) tasks.emplace_back(n, r);

  std::vector<RunOutput> outputs(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      try {
        outputs[t] = play_run(cfg, tasks[t].first, tasks[t].second, keep_game);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };

  unsigned workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return outputs;
}

std::string header_row(const ExperimentConfig& cfg) {
  // Output location and thread count do not change results; leaving them out
  // keeps files from different directories or worker counts byte-identical.
  auto j = json::parse(config_to_json(cfg));
  j.erase("output-path");
  j.erase("workers");
  return "# config=" + j.dump() + " build=" + build_id() + "\r\n";
}

std::string fig1_csv(const ExperimentConfig& cfg, const Scenario& s, const GameOutcome& game) {
  std::string out = header_row(cfg);
  out += "iteration,eu_id,surplus,utility\r\n";
  int iteration = 0;
  auto emit = [&](const SolverTrace& trace, const std::vector<double>& prices) {
    for (const auto& rec : trace.records) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double e = s.users[i].surplus;
        out += std::to_string(iteration) + "," + std::to_string(s.users[i].id) + "," + num(e) + "," +
               num(eu_utility(rec.x[i], e, prices[i])) + "\r\n";
      }
      ++iteration;
    }
  };
  emit(game.stage1_trace, game.stage1.prices);
  emit(game.stage2_trace, game.stage2.prices);
  return out;
}

std::string utility_csv(const ExperimentConfig& cfg, const std::vector<SummaryRow>& rows) {
  std::string out = header_row(cfg);
  out += "n,scheme,mean_utility,std\r\n";
  for (const auto& r : rows) {
    if (r.metric != "utility") continue;
    out += std::to_string(r.n) + "," + r.scheme + "," + num(r.mean) + "," + num(r.std) + "\r\n";
  }
  return out;
}

std::string cost_csv(const ExperimentConfig& cfg, const std::vector<SummaryRow>& rows) {
  std::string out = header_row(cfg);
  out += "n,scheme,mean_cost,std,accounting_variant\r\n";
  for (const auto& r : rows) {
    if (r.metric == "utility") continue;
    out += std::to_string(r.n) + "," + r.scheme + "," + num(r.mean) + "," + num(r.std) + "," +
           r.metric + "\r\n";
  }
  return out;
}

std::string runs_csv(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs) {
  std::string out = header_row(cfg);
  out += "n,run_index,nsg_utility_per_user,fit_utility_per_user,nsg_cost,nsg_payment,fit_cost,"
         "fit_payment,stage1_iterations,stage2_iterations\r\n";
  for (const auto& r : runs) {
    out += std::to_string(r.n) + "," + std::to_string(r.run_index) + "," +
           num(r.nsg_utility_per_user) + "," + num(r.fit_utility_per_user) + "," + num(r.nsg_cost) +
           "," + num(r.nsg_payment) + "," + num(r.fit_cost) + "," + num(r.fit_payment) + "," +
           std::to_string(r.stage1_iterations) + "," + std::to_string(r.stage2_iterations) + "\r\n";
  }
  return out;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs) {
  std::vector<SummaryRow> rows;
  for (int n : cfg.n_values) {
    std::vector<double> nu, fu, nc, np, fc, fp;
    for (const auto& r : runs) {
      if (r.n != n) continue;
      nu.push_back(r.nsg_utility_per_user);
      fu.push_back(r.fit_utility_per_user);
      nc.push_back(r.nsg_cost);
      np.push_back(r.nsg_payment);
      fc.push_back(r.fit_cost);
      fp.push_back(r.fit_payment);
    }
    auto add = [&](const char* scheme, const char* metric, const std::vector<double>& v) {
      const auto st = stats(v);
      rows.push_back({n, scheme, metric, st.mean, st.std});
    };
    add("NSG", "utility", nu);
    add("FIT", "utility", fu);
    add("NSG", "quadratic", nc);
    add("FIT", "quadratic", fc);
    add("NSG", "payment", np);
    add("FIT", "payment", fp);
  }
  return rows;
}

void write_atomically(const fs::path& path, const std::string& body) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    os.flush();
    if (!os) {
      os.close();
      fs::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::kFig1Convergence: return "fig1_convergence";
    case Preset::kFig2UtilityVsN: return "fig2_utility_vs_n";
    case Preset::kFig3CostVsN: return "fig3_cost_vs_n";
    case Preset::kCustom: return "custom";
  }
  return "custom";
}

Preset preset_from_string(const std::string& name) {
  for (Preset p : {Preset::kFig1Convergence, Preset::kFig2UtilityVsN, Preset::kFig3CostVsN, Preset::kCustom})
    if (to_string(p) == name) return p;
  throw ConfigError("unknown preset '" + name +
                    "' (expected fig1_convergence, fig2_utility_vs_n, fig3_cost_vs_n or custom)");
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  if (runs < 1) problems.push_back("runs must be >= 1");
  if (n_values.empty()) problems.push_back("n-values must be nonempty");
  for (int n : n_values)
    if (n < 1) problems.push_back("n-values entries must be >= 1");
  if (!(surplus_low > 0.0 && surplus_low < surplus_high))
    problems.push_back("surplus-range must satisfy 0 < low < high");
  if (!(total_price > 0.0)) problems.push_back("total-price must be positive");
  if (!(p_min > 0.0 && p_min <= p_max)) problems.push_back("prices must satisfy 0 < p-min <= p-max");
  if (!(fit_tariff > 0.0)) problems.push_back("fit-tariff must be positive");
  if (!(cost_linear > 0.0) || !(cost_const > 0.0)) problems.push_back("cost-linear and cost-const must be positive");
  if (aggregation_count < 1) problems.push_back("aggregation-count must be >= 1");
  if (deficiency_rule.kind == DeficiencyRule::Kind::kProportional && !(deficiency_rule.factor > 0.0))
    problems.push_back("deficiency-rule factor must be positive");
  if (deficiency_rule.kind == DeficiencyRule::Kind::kFixed && !(deficiency_rule.value > 0.0))
    problems.push_back("deficiency-rule value must be positive");
  if (workers < 0) problems.push_back("workers must be >= 0");
  try {
    solver.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

ExperimentConfig preset_config(Preset preset) {
  ExperimentConfig cfg;
  cfg.preset = preset;
  if (preset == Preset::kFig1Convergence) {
    cfg.n_values = {5};
    cfg.runs = 1;
  }
  return cfg;
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  static const std::vector<std::string> known = {
      "preset", "n-values", "runs", "surplus-range", "total-price", "p-min", "p-max",
      "fit-tariff", "cost-linear", "cost-const", "aggregation-count", "deficiency-rule",
      "price-floor", "seed", "output-path", "workers", "dump-runs", "solver"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config field '" + key + "'");

  try {
    ExperimentConfig cfg = preset_config(preset_from_string(j.value("preset", std::string("fig2_utility_vs_n"))));
    read_field(j, "n-values", cfg.n_values);
    read_field(j, "runs", cfg.runs);
    if (auto it = j.find("surplus-range"); it != j.end()) {
      const auto range = it->get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("surplus-range must have two entries");
      cfg.surplus_low = range[0];
      cfg.surplus_high = range[1];
    }
    read_field(j, "total-price", cfg.total_price);
    read_field(j, "p-min", cfg.p_min);
    read_field(j, "p-max", cfg.p_max);
    read_field(j, "fit-tariff", cfg.fit_tariff);
    read_field(j, "cost-linear", cfg.cost_linear);
    read_field(j, "cost-const", cfg.cost_const);
    read_field(j, "aggregation-count", cfg.aggregation_count);
    if (auto it = j.find("deficiency-rule"); it != j.end()) {
      const auto kind = it->value("kind", std::string("proportional"));
      if (kind == "proportional")
        cfg.deficiency_rule.kind = DeficiencyRule::Kind::kProportional;
      else if (kind == "fixed")
        cfg.deficiency_rule.kind = DeficiencyRule::Kind::kFixed;
      else
        throw ConfigError("deficiency-rule kind must be proportional or fixed");
      read_field(*it, "factor", cfg.deficiency_rule.factor);
      read_field(*it, "value", cfg.deficiency_rule.value);
    }
    if (auto it = j.find("price-floor"); it != j.end())
      cfg.price_floor = price_floor_policy_from_string(it->get<std::string>());
    read_field(j, "seed", cfg.seed);
    read_field(j, "output-path", cfg.output_path);
    read_field(j, "workers", cfg.workers);
    read_field(j, "dump-runs", cfg.dump_runs);
    if (auto it = j.find("solver"); it != j.end()) {
      read_field(*it, "gamma", cfg.solver.gamma);
      read_field(*it, "beta", cfg.solver.beta);
      read_field(*it, "delta", cfg.solver.delta);
      read_field(*it, "residual-tol", cfg.solver.residual_tol);
      read_field(*it, "max-iterations", cfg.solver.max_iterations);
      read_field(*it, "max-backtracks", cfg.solver.max_backtracks);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["preset"] = to_string(cfg.preset);
  j["n-values"] = cfg.n_values;
  j["runs"] = cfg.runs;
  j["surplus-range"] = {cfg.surplus_low, cfg.surplus_high};
  j["total-price"] = cfg.total_price;
  j["p-min"] = cfg.p_min;
  j["p-max"] = cfg.p_max;
  j["fit-tariff"] = cfg.fit_tariff;
  j["cost-linear"] = cfg.cost_linear;
  j["cost-const"] = cfg.cost_const;
  j["aggregation-count"] = cfg.aggregation_count;
  j["deficiency-rule"] = {{"kind", deficiency_kind_name(cfg.deficiency_rule.kind)},
                          {"factor", cfg.deficiency_rule.factor},
                          {"value", cfg.deficiency_rule.value}};
  j["price-floor"] = to_string(cfg.price_floor);
  j["seed"] = cfg.seed;
  j["output-path"] = cfg.output_path;
  j["workers"] = cfg.workers;
  j["dump-runs"] = cfg.dump_runs;
  j["solver"] = {{"gamma", cfg.solver.gamma},
                 {"beta", cfg.solver.beta},
                 {"delta", cfg.solver.delta},
                 {"residual-tol", cfg.solver.residual_tol},
                 {"max-iterations", cfg.solver.max_iterations},
                 {"max-backtracks", cfg.solver.max_backtracks}};
  return j.dump();
}

SampledScenario sample_scenario(const ExperimentConfig& cfg, int n, int run_index) {
  cfg.validate();
  if (n < 1) throw ConfigError("sample_scenario: n must be >= 1");
  if (run_index < 0) throw ConfigError("sample_scenario: run_index must be >= 0");

  SampledScenario out;
  Scenario& s = out.scenario;
  s.seed = hash_key({cfg.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(run_index)});
  CounterRng rng(s.seed);
  s.users.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    s.users[i] = {i, rng.uniform(cfg.surplus_low, cfg.surplus_high), cfg.aggregation_count};

  auto& g = s.grid;
  g.deficiency = cfg.deficiency_rule.kind == DeficiencyRule::Kind::kProportional
                     ? cfg.deficiency_rule.factor * n * 0.5 * (cfg.surplus_low + cfg.surplus_high)
                     : cfg.deficiency_rule.value;
  g.total_price = cfg.total_price;
  g.p_min = cfg.p_min;
  g.p_max = cfg.p_max;
  g.cost_linear.assign(n, cfg.cost_linear);
  g.cost_const.assign(n, cfg.cost_const);
  if (auto msg = reconcile_price_floor(g, s.size(), cfg.price_floor)) out.warnings.push_back(*msg);

  if (auto report = validate_scenario(s); !report.ok())
    throw ConfigError("sampled scenario for n = " + std::to_string(n) + " is invalid: " + report.summary());
  return out;
}

std::vector<std::pair<std::string, std::string>> render_experiment(const ExperimentConfig& cfg,
                                                                   ExperimentResult& result) {
  cfg.validate();
  const bool convergence = cfg.preset == Preset::kFig1Convergence;
  auto outputs = play_all(cfg, convergence);

  result.runs.clear();
  result.warnings.clear();
  for (auto& o : outputs) {
    result.runs.push_back(o.record);
    for (auto& w : o.warnings) {
      if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end())
        result.warnings.push_back(w);
    }
  }
  result.summary = summarize(cfg, result.runs);

  std::vector<std::pair<std::string, std::string>> files;
  const std::string stem = to_string(cfg.preset);
  switch (cfg.preset) {
    case Preset::kFig1Convergence: {
      const auto scenario = sample_scenario(cfg, outputs.front().record.n, 0).scenario;
      files.emplace_back(stem + ".csv", fig1_csv(cfg, scenario, outputs.front().game));
      break;
    }
    case Preset::kFig2UtilityVsN:
      files.emplace_back(stem + ".csv", utility_csv(cfg, result.summary));
      break;
    case Preset::kFig3CostVsN:
      files.emplace_back(stem + ".csv", cost_csv(cfg, result.summary));
      break;
    case Preset::kCustom:
      files.emplace_back("custom_utility_vs_n.csv", utility_csv(cfg, result.summary));
      files.emplace_back("custom_cost_vs_n.csv", cost_csv(cfg, result.summary));
      break;
  }
  if (cfg.dump_runs) files.emplace_back(stem + "_runs.csv", runs_csv(cfg, result.runs));
  return files;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  const auto files = render_experiment(cfg, result);
  const fs::path dir(cfg.output_path);
  fs::create_directories(dir);
  for (const auto& [name, body] : files) {
    write_atomically(dir / name, body);
    result.written.push_back(dir / name);
  }
  return result;
}

std::string scenario_to_json(const Scenario& s) {
  json users = json::array();
  for (const auto& u : s.users)
    users.push_back({{"id", u.id}, {"surplus", u.surplus}, {"aggregation-count", u.aggregation_count}});
  json j;
  j["seed"] = s.seed;
  j["users"] = std::move(users);
  j["grid"] = {{"deficiency", s.grid.deficiency},   {"total-price", s.grid.total_price},
               {"p-min", s.grid.p_min},             {"p-max", s.grid.p_max},
               {"cost-linear", s.grid.cost_linear}, {"cost-const", s.grid.cost_const}};
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Scenario s;
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& u : j.at("users")) {
      EnergyUser e;
      e.id = u.at("id").get<int>();
      e.surplus = u.at("surplus").get<double>();
      e.aggregation_count = u.value("aggregation-count", 1);
      s.users.push_back(e);
    }
    const auto& g = j.at("grid");
    s.grid.deficiency = g.at("deficiency").get<double>();
    s.grid.total_price = g.at("total-price").get<double>();
    s.grid.p_min = g.at("p-min").get<double>();
    s.grid.p_max = g.at("p-max").get<double>();
    s.grid.cost_linear = g.at("cost-linear").get<std::vector<double>>();
    s.grid.cost_const = g.at("cost-const").get<std::vector<double>>();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario document: ") + e.what());
  }
}

std::string build_id() { return GRIDTRADE_BUILD_ID; }

}  // namespace gridtrade
