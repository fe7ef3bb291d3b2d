#include "gridtrade/engine.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gridtrade/projection.hpp"
#include "gridtrade/rng.hpp"

namespace gridtrade {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kAnnounce: return "Announce";
    case MessageKind::kOffer: return "Offer";
    case MessageKind::kSlackReport: return "SlackReport";
    case MessageKind::kRepeatBit: return "RepeatBit";
    case MessageKind::kPriceUpdate: return "PriceUpdate";
  }
  return "Unknown";
}

void MessageLog::append(Message m) {
  if (m.round < last_round_)
    throw std::logic_error("MessageLog: round " + std::to_string(m.round) + " after round " +
                           std::to_string(last_round_));
  if (m.round > last_round_) {
    ++rounds_;
    last_round_ = m.round;
  }
  messages_.push_back(std::move(m));
}

std::vector<int> MessageLog::per_user_counts(std::size_t users) const {
  std::vector<int> counts(users, 0);
  for (const auto& m : messages_) {
    if (m.sender >= 0 && static_cast<std::size_t>(m.sender) < users) ++counts[m.sender];
  }
  return counts;
}

void MessageLog::write_json_lines(std::ostream& os) const {
  for (const auto& m : messages_) {
    json j;
    j["round"] = m.round;
    if (m.sender == kGridSender)
      j["sender"] = "PG";
    else
      j["sender"] = m.sender;
    j["kind"] = to_string(m.kind());
    j["payload"] = std::visit(
        Overloaded{
            [](const Announce& a) {
              return json{{"deficiency", a.deficiency}, {"total_price", a.total_price}, {"users", a.users}};
            },
            [](const Offer& o) { return json{{"energy", o.energy}}; },
            [](const SlackReport& s) { return json{{"mu", s.mu}}; },
            [](const RepeatBit& r) { return json{{"repeat", r.repeat}}; },
            [](const PriceUpdate& p) { return json{{"recipient", p.recipient}, {"price", p.price}}; },
        },
        m.payload);
    os << j.dump() << '\n';
  }
}

MessageLog MessageLog::read_json_lines(std::istream& is) {
  MessageLog log;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    Message m;
    m.round = j.at("round").get<int>();
    const auto& sender = j.at("sender");
    if (sender.is_string()) {
      if (sender.get<std::string>() != "PG") throw std::runtime_error("unknown sender " + sender.dump());
      m.sender = kGridSender;
    } else {
      m.sender = sender.get<int>();
    }
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("payload");
    if (kind == "Announce") {
      m.payload = Announce{p.at("deficiency").get<double>(), p.at("total_price").get<double>(),
                           p.at("users").get<int>()};
    } else if (kind == "Offer") {
      m.payload = Offer{p.at("energy").get<double>()};
    } else if (kind == "SlackReport") {
      m.payload = SlackReport{p.at("mu").get<double>()};
    } else if (kind == "RepeatBit") {
      m.payload = RepeatBit{p.at("repeat").get<bool>()};
    } else if (kind == "PriceUpdate") {
      m.payload = PriceUpdate{p.at("recipient").get<int>(), p.at("price").get<double>()};
    } else {
      throw std::runtime_error("unknown message kind " + kind);
    }
    log.append(std::move(m));
  }
  return log;
}

std::optional<std::string> MessageLog::protocol_violation(std::size_t users,
                                                          bool repeated_pricing) const {
  auto fail = [](std::size_t at, const std::string& what) -> std::optional<std::string> {
    return "message " + std::to_string(at) + ": " + what;
  };
  const std::size_t n = messages_.size();
  std::size_t i = 0;
  int stage = 1;  // 1 = uniform price, 2 = optimized price
  int prev_round = -1;
  bool first_block = true;

  auto user_block = [&](MessageKind kind, int round) -> std::optional<std::string> {
    std::vector<bool> seen(users, false);
    for (std::size_t k = 0; k < users; ++k, ++i) {
      if (i >= n || messages_[i].kind() != kind)
        return fail(i, "expected " + std::to_string(users) + " " + to_string(kind) + " messages");
      const auto& m = messages_[i];
      if (m.round != round) return fail(i, "round changes inside a round");
      if (m.sender < 0 || static_cast<std::size_t>(m.sender) >= users || seen[m.sender])
        return fail(i, "unexpected or duplicate sender in " + to_string(kind) + " block");
      seen[m.sender] = true;
    }
    return std::nullopt;
  };

  while (i < n) {
    const auto& head = messages_[i];
    const int round = head.round;
    if (round <= prev_round) return fail(i, "rounds must strictly increase");
    prev_round = round;

    if (head.kind() == MessageKind::kAnnounce) {
      if (stage != 1) return fail(i, "Announce after prices were updated");
      if (head.sender != kGridSender) return fail(i, "Announce must come from the grid");
      ++i;
    } else if (head.kind() == MessageKind::kPriceUpdate) {
      if (first_block) return fail(i, "game must open with Announce");
      if (stage == 2 && !repeated_pricing) return fail(i, "second PriceUpdate block");
      stage = 2;
      std::vector<bool> seen(users, false);
      for (std::size_t k = 0; k < users; ++k, ++i) {
        if (i >= n || messages_[i].kind() != MessageKind::kPriceUpdate)
          return fail(i, "expected one PriceUpdate per user");
        const auto& m = messages_[i];
        const int to = std::get<PriceUpdate>(m.payload).recipient;
        if (m.sender != kGridSender || m.round != round) return fail(i, "malformed PriceUpdate");
        if (to < 0 || static_cast<std::size_t>(to) >= users || seen[to])
          return fail(i, "unexpected or duplicate PriceUpdate recipient");
        seen[to] = true;
      }
    } else if (stage == 1) {
      return fail(i, "uniform-price round must open with Announce");
    }
    first_block = false;

    if (auto e = user_block(MessageKind::kOffer, round)) return e;
    if (auto e = user_block(MessageKind::kSlackReport, round)) return e;
    if (i >= n || messages_[i].kind() != MessageKind::kRepeatBit)
      return fail(i, "round must close with RepeatBit");
    if (messages_[i].sender != kGridSender || messages_[i].round != round)
      return fail(i, "malformed RepeatBit");
    ++i;
  }
  if (first_block) return std::string("empty log");
  return std::nullopt;
}

namespace {

struct StageResult {
  std::vector<double> x;
  SolverTrace trace;
  bool converged = false;
  bool mu_agreed = false;
  double residual = 0.0;
  int rounds = 0;
};

enum class Opening { kAnnounce, kPriceUpdate };

// Residual the grid can evaluate from the round's messages alone: the slack
// reports give -F(x), and E_i = x_i + mu_i - p_i recovers the box.
double residual_from_reports(std::span<const double> offers, std::span<const double> slacks,
                             std::span<const double> prices, double budget) {
  const std::size_t n = offers.size();
  std::vector<double> upper(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    upper[i] = offers[i] + slacks[i] - prices[i];
    target[i] = offers[i] + slacks[i];
  }
  const auto r = project_box_budget(target, FeasibleSet(std::move(upper), budget)).point;
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += (offers[i] - r[i]) * (offers[i] - r[i]);
  return std::sqrt(sq);
}

StageResult play_followers(const Scenario& s, const std::vector<double>& prices,
                           std::vector<double> x0, const EngineOptions& opts, Opening opening,
                           MessageLog& log, int& round) {
  const std::size_t n = s.size();
  const auto surpluses = s.surpluses();
  FeasibleSet set(surpluses, s.grid.deficiency);
  SolodovSvaiter solver(PseudoGradient(surpluses, prices), set, opts.solver, std::move(x0));

  StageResult out;
  for (int k = 0;; ++k) {
    if (k >= opts.solver.max_iterations) break;
    const int r = round++;
    if (opening == Opening::kAnnounce) {
      log.append({r, kGridSender, Announce{s.grid.deficiency, s.grid.total_price, static_cast<int>(n)}});
    } else if (k == 0) {
      for (std::size_t i = 0; i < n; ++i)
        log.append({r, kGridSender, PriceUpdate{static_cast<int>(i), prices[i]}});
    }

    if (k > 0 || !solver.converged()) {
      if (!solver.step()) break;
    }

    const auto& x = solver.iterate();
    const auto mu = mu_vector(x, solver.pseudo_gradient());
    for (std::size_t i = 0; i < n; ++i) log.append({r, static_cast<int>(i), Offer{x[i]}});
    for (std::size_t i = 0; i < n; ++i) log.append({r, static_cast<int>(i), SlackReport{mu[i]}});

    const double residual = residual_from_reports(x, mu, prices, s.grid.deficiency);
    const double spread = interior_mu_spread(x, mu, surpluses);
    double mean_mu = 0.0;
    for (double m : mu) mean_mu += m;
    mean_mu /= static_cast<double>(n);
    out.mu_agreed = spread <= opts.mu_tol_rel * (1.0 + std::abs(mean_mu));
    out.residual = residual;
    out.rounds = k + 1;

    // Convergence is decided on the natural residual; slack agreement alone
    // is vacuous when box bounds bind.
    const bool repeat = residual > opts.solver.residual_tol;
    log.append({r, kGridSender, RepeatBit{repeat}});
    if (!repeat) {
      out.converged = true;
      break;
    }
  }
  solver.finish();
  out.x = solver.iterate();
  out.trace = solver.take_trace();
  return out;
}

}  // namespace

GameOutcome run_stackelberg(const Scenario& s, const EngineOptions& opts) {
  if (auto report = validate_scenario(s); !report.ok())
    throw ScenarioError("invalid scenario: " + report.summary());
  opts.solver.validate();
  if (opts.price_rounds < 1) throw std::invalid_argument("EngineOptions: price_rounds must be >= 1");

  const std::size_t n = s.size();
  GameOutcome out;
  int round = 0;

  const std::vector<double> uniform(n, s.grid.total_price / static_cast<double>(n));
  auto first = play_followers(s, uniform, std::vector<double>(n, 0.0), opts, Opening::kAnnounce,
                              out.log, round);
  out.stage1 = make_equilibrium_result(s, first.x, uniform, static_cast<int>(first.trace.records.size()),
                                       first.residual);
  out.stage1_trace = std::move(first.trace);
  out.stage1_mu_agreed = first.mu_agreed;
  if (!first.converged) {
    out.stage2 = out.stage1;
    return out;
  }

  std::vector<double> offered = first.x;
  std::vector<double> prices = uniform;
  StageResult second;
  bool converged = true;
  for (int pr = 0; pr < opts.price_rounds; ++pr) {
    auto pricing = optimize_prices(offered, s.grid);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(pricing.prices[i] - prices[i]));
    if (pr > 0 && change <= opts.price_settle_tol) break;

    out.offered_energies = offered;
    out.uniform_cost_at_offer = grid_cost(uniform, offered, s.grid);
    out.pricing = pricing;
    prices = pricing.prices;
    second = play_followers(s, prices, offered, opts, Opening::kPriceUpdate, out.log, round);
    out.price_rounds_used = pr + 1;
    if (!second.converged) {
      converged = false;
      break;
    }
    offered = second.x;
  }

  out.stage2 = make_equilibrium_result(s, second.x, prices,
                                       static_cast<int>(second.trace.records.size()), second.residual);
  out.stage2_trace = std::move(second.trace);
  out.stage2_mu_agreed = second.mu_agreed;
  out.converged = converged;
  return out;
}

NseReport check_nse(const GameOutcome& outcome, const Scenario& s, int trials, std::uint64_t seed,
                    double tol) {
  if (!outcome.converged) throw std::invalid_argument("check_nse: outcome did not converge");
  const std::size_t n = s.size();
  const auto surpluses = s.surpluses();
  const auto& x_star = outcome.stage2.energies;
  const auto& p_star = outcome.stage2.prices;

  NseReport report;
  report.trials = trials;
  CounterRng rng(hash_key({seed, 0x6e7365ULL}));

  // Follower side: one user deviates, others stay at x*.
  const double base_utility = joint_utility(x_star, surpluses, p_star);
  const double total = std::accumulate(x_star.begin(), x_star.end(), 0.0);
  std::vector<double> x = x_star;
  for (int t = 0; t < trials; ++t) {
    const std::size_t i = rng.index(n);
    const double others = total - x_star[i];
    const double cap = std::max(0.0, std::min(surpluses[i], s.grid.deficiency - others));
    double xi;
    if (t % 2 == 0) {
      xi = rng.uniform(0.0, cap);
    } else {
      const double scale = std::pow(10.0, rng.uniform(-8.0, 1.0)) * std::max(1.0, x_star[i]);
      xi = std::clamp(x_star[i] + scale * rng.normal(), 0.0, cap);
    }
    x[i] = xi;
    const double gain = joint_utility(x, surpluses, p_star) - base_utility;
    x[i] = x_star[i];
    report.max_follower_gain = std::max(report.max_follower_gain, gain);
    if (gain > tol) ++report.follower_violations;
  }

  // Leader side: feasible price vectors against the energies it priced.
  const auto& offered = outcome.offered_energies;
  const double base_cost = grid_cost(p_star, offered, s.grid);
  std::vector<double> u(n);
  for (int t = 0; t < trials; ++t) {
    if (t % 2 == 0) {
      for (auto& v : u) v = rng.uniform(s.grid.p_min, s.grid.p_max);
    } else {
      const double scale = std::pow(10.0, rng.uniform(-8.0, 1.0));
      for (std::size_t i = 0; i < n; ++i) u[i] = p_star[i] + scale * rng.normal();
    }
    const auto p = project_price_slice(u, s.grid);
    const double saving = base_cost - grid_cost(p, offered, s.grid);
    report.max_leader_saving = std::max(report.max_leader_saving, saving);
    if (saving > tol) ++report.leader_violations;
  }

  const double repriced = optimize_prices(x_star, s.grid).cost;
  report.final_response_regret = std::max(0.0, grid_cost(p_star, x_star, s.grid) - repriced);
  return report;
}

FitOutcome run_fit(const Scenario& s, double tariff) {
  if (!(tariff > 0.0) || !std::isfinite(tariff)) throw std::invalid_argument("run_fit: tariff must be positive");
  const std::size_t n = s.size();
  auto x = s.surpluses();
  const double supply = std::accumulate(x.begin(), x.end(), 0.0);
  if (supply > s.grid.deficiency) {
    const double ratio = s.grid.deficiency / supply;
    for (auto& v : x) v *= ratio;
  }
  const std::vector<double> prices(n, tariff);
  FitOutcome out;
  const double bought = std::accumulate(x.begin(), x.end(), 0.0);
  out.result = make_equilibrium_result(s, std::move(x), prices, 0, 0.0);
  out.tariff_cost = out.result.grid_cost;
  out.payment_cost = tariff * bought;
  return out;
}

}  // namespace gridtrade
