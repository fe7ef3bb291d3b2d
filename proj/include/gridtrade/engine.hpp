#pragma once

// Two-step Stackelberg game between the grid (leader) and energy users
// (followers), simulated as a round-based message exchange.
//
// Round grammar of a default run:
//   (Announce Offer* SlackReport* RepeatBit)+            followers at p = P_r / N
//   PriceUpdate* Offer* SlackReport* RepeatBit           optimized prices
//   (Offer* SlackReport* RepeatBit)*                     followers at p*
// Every Offer and SlackReport block carries exactly one message per user.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridtrade/model.hpp"
#include "gridtrade/price_opt.hpp"
#include "gridtrade/vi_solver.hpp"

namespace gridtrade {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kGridSender = -1;

struct Announce {
  double deficiency = 0.0;
  double total_price = 0.0;
  int users = 0;
};
struct Offer {
  double energy = 0.0;
};
struct SlackReport {
  double mu = 0.0;
};
struct RepeatBit {
  bool repeat = false;
};
struct PriceUpdate {
  int recipient = 0;
  double price = 0.0;
};

using Payload = std::variant<Announce, Offer, SlackReport, RepeatBit, PriceUpdate>;

enum class MessageKind { kAnnounce, kOffer, kSlackReport, kRepeatBit, kPriceUpdate };

std::string to_string(MessageKind kind);

struct Message {
  int round = 0;
  int sender = kGridSender;  // user id, or kGridSender
  Payload payload;

  MessageKind kind() const { return static_cast<MessageKind>(payload.index()); }
};

/// Append-only transcript; round numbers never decrease.
class MessageLog {
 public:
  void append(Message m);

  const std::vector<Message>& messages() const { return messages_; }
  int total_rounds() const { return rounds_; }
  /// Messages sent by each user, indexed by id.
  std::vector<int> per_user_counts(std::size_t users) const;

  /// One JSON object per line with fields round, sender ("PG" or the user
  /// id), kind and payload.
  void write_json_lines(std::ostream& os) const;
  static MessageLog read_json_lines(std::istream& is);

  /// Checks the round grammar above. With repeated_pricing, additional
  /// PriceUpdate blocks may open later rounds. Returns a description of the
  /// first violation, or nullopt.
  std::optional<std::string> protocol_violation(std::size_t users,
                                                bool repeated_pricing = false) const;

 private:
  std::vector<Message> messages_;
  int rounds_ = 0;
  int last_round_ = -1;
};

struct EngineOptions {
  SSConfig solver;
  double mu_tol_rel = 1e-6;  // interior slack agreement band, relative to 1 + |mean mu|
  /// Leader re-optimizations. 1 reproduces the two-step game; larger values
  /// alternate pricing and follower play until prices settle.
  int price_rounds = 1;
  double price_settle_tol = 1e-9;
};

struct GameOutcome {
  EquilibriumResult stage1;  // uniform price P_r / N
  EquilibriumResult stage2;  // optimized prices
  MessageLog log;
  bool converged = false;

  std::vector<double> offered_energies;  // energies the final prices were optimized for
  PriceSolution pricing;
  double uniform_cost_at_offer = 0.0;  // grid cost of the uniform prices at offered_energies

  SolverTrace stage1_trace;
  SolverTrace stage2_trace;
  bool stage1_mu_agreed = false;
  bool stage2_mu_agreed = false;
  int price_rounds_used = 0;
};

/// Plays the game. Throws ScenarioError if the scenario fails validation and
/// PriceInfeasibleError if the price budget cannot be met. Follower
/// non-convergence is reported through converged = false.
GameOutcome run_stackelberg(const Scenario& s, const EngineOptions& opts = {});

struct NseReport {
  int trials = 0;
  int follower_violations = 0;
  int leader_violations = 0;
  double max_follower_gain = 0.0;   // best joint-utility improvement found
  double max_leader_saving = 0.0;   // best cost reduction found at the offered energies
  /// Cost the leader could still save by re-pricing against the followers'
  /// final response. Informational: the two-step game does not re-price.
  double final_response_regret = 0.0;

  bool ok() const { return follower_violations == 0 && leader_violations == 0; }
};

/// Samples unilateral follower deviations (respecting the shared budget) and
/// feasible price vectors, and counts improvements larger than tol.
NseReport check_nse(const GameOutcome& outcome, const Scenario& s, int trials,
                    std::uint64_t seed = 0, double tol = 1e-6);

struct FitOutcome {
  EquilibriumResult result;  // grid_cost uses the quadratic cost at p_i = tariff
  double tariff_cost = 0.0;   // same as result.grid_cost
  double payment_cost = 0.0;  // tariff * total energy bought
};

/// Feed-in-tariff baseline: every user offers all of its surplus at the flat
/// tariff, rationed proportionally when the total exceeds the deficiency.
FitOutcome run_fit(const Scenario& s, double tariff);

}  // namespace gridtrade
