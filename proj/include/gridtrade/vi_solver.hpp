#pragma once

// Followers' variational equilibrium for a fixed price vector, computed with
// the Solodov-Svaiter hyperplane projection method.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridtrade/model.hpp"

namespace gridtrade {

/// F(x) = x - E - p, the negated stacked gradient of the users' utilities.
class PseudoGradient {
 public:
  PseudoGradient(std::vector<double> surpluses, std::vector<double> prices);

  std::vector<double> operator()(std::span<const double> x) const;

  std::span<const double> surpluses() const { return surpluses_; }
  std::span<const double> prices() const { return prices_; }
  std::size_t size() const { return surpluses_.size(); }

 private:
  std::vector<double> surpluses_;
  std::vector<double> prices_;
};

/// Armijo search and stopping parameters.
struct SSConfig {
  double gamma = 1.0;   // initial step, (0, 1]
  double beta = 0.9;    // backtracking ratio, (0, 1)
  double delta = 0.05;  // acceptance coefficient, (0, 1)
  double residual_tol = 1e-8;
  int max_iterations = 10000;
  int max_backtracks = 60;

  void validate() const;
};

struct IterationRecord {
  std::vector<double> x;
  double residual = 0.0;  // ||x - r(x)||
  double step = 0.0;      // accepted Armijo step from x, 0 on the final record
  std::vector<double> z;
  std::vector<double> mu;
};

struct SolverTrace {
  std::vector<IterationRecord> records;

  /// Columns: iteration,residual,step,mu_spread.
  void write_csv(std::ostream& os) const;
};

struct NaturalResidual {
  std::vector<double> r;
  double norm = 0.0;
};

/// r = Prj_X(x - F(x)) and ||x - r||; zero exactly at solutions of VI(X, F).
NaturalResidual natural_residual(std::span<const double> x, const PseudoGradient& F,
                                 const FeasibleSet& set);

/// mu_i = E_i - x_i + p_i.
std::vector<double> mu_vector(std::span<const double> x, const PseudoGradient& F);

/// max - min of mu over components strictly inside (0, E_i); 0 when fewer
/// than two components are interior.
double interior_mu_spread(std::span<const double> x, std::span<const double> mu,
                          std::span<const double> upper, double tol = 1e-9);

/// Closed-form VE: since F(x) = x - (E + p), the VI solution is Prj_X(E + p).
std::vector<double> ve_closed_form(const PseudoGradient& F, const FeasibleSet& set);

enum class SolveStatus { kConverged, kMaxIterations, kArmijoFailure };

std::string to_string(SolveStatus status);

/// Step-at-a-time driver, used directly by the round-based game engine.
class SolodovSvaiter {
 public:
  SolodovSvaiter(PseudoGradient F, FeasibleSet set, SSConfig cfg, std::vector<double> x0);

  const std::vector<double>& iterate() const { return x_; }
  double residual() const { return residual_.norm; }
  bool converged() const { return residual_.norm <= cfg_.residual_tol; }
  const PseudoGradient& pseudo_gradient() const { return F_; }
  const FeasibleSet& feasible_set() const { return set_; }
  const SSConfig& config() const { return cfg_; }

  /// One iteration: Armijo point z on [x, r(x)], then x <- Prj_{X cap H}(x)
  /// with H = {w : <F(z), w - z> <= 0}. Appends the departing iterate to the
  /// trace. Returns false if the Armijo search failed (iterate unchanged).
  bool step();

  /// Appends the current iterate as the closing trace record.
  void finish();

  const SolverTrace& trace() const { return trace_; }
  SolverTrace take_trace() { return std::move(trace_); }

 private:
  PseudoGradient F_;
  FeasibleSet set_;
  SSConfig cfg_;
  std::vector<double> x_;
  NaturalResidual residual_;
  SolverTrace trace_;
};

struct VeSolution {
  std::vector<double> x;
  SolverTrace trace;
  SolveStatus status = SolveStatus::kConverged;

  bool converged() const { return status == SolveStatus::kConverged; }
  /// Number of trace records; one when x0 already solves the VI.
  int iterations() const { return static_cast<int>(trace.records.size()); }
};

/// Runs the method from x0 (feasible) until the natural residual drops to
/// residual_tol. Non-convergence is reported through status with the full
/// trace attached.
VeSolution solve_ve(const PseudoGradient& F, const FeasibleSet& set, const SSConfig& cfg,
                    std::vector<double> x0);
VeSolution solve_ve(const PseudoGradient& F, const FeasibleSet& set, const SSConfig& cfg = {});

}  // namespace gridtrade
