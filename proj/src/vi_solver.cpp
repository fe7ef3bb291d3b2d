#include "gridtrade/vi_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "gridtrade/projection.hpp"

namespace gridtrade {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

PseudoGradient::PseudoGradient(std::vector<double> surpluses, std::vector<double> prices)
    : surpluses_(std::move(surpluses)), prices_(std::move(prices)) {
  if (surpluses_.size() != prices_.size())
    throw std::invalid_argument("PseudoGradient: surplus and price vectors differ in length");
}

std::vector<double> PseudoGradient::operator()(std::span<const double> x) const {
  if (x.size() != surpluses_.size())
    throw std::invalid_argument("PseudoGradient: argument length mismatch");
  std::vector<double> f(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) f[i] = x[i] - surpluses_[i] - prices_[i];
  return f;
}

void SSConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("SSConfig: gamma must be in (0, 1]");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("SSConfig: beta must be in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("SSConfig: delta must be in (0, 1)");
  if (!(residual_tol > 0.0)) throw std::invalid_argument("SSConfig: residual_tol must be positive");
  if (max_iterations < 1) throw std::invalid_argument("SSConfig: max_iterations must be >= 1");
  if (max_backtracks < 0) throw std::invalid_argument("SSConfig: max_backtracks must be >= 0");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kArmijoFailure: return "armijo_failure";
  }
  return "unknown";
}

NaturalResidual natural_residual(std::span<const double> x, const PseudoGradient& F,
                                 const FeasibleSet& set) {
  if (!set.contains(x, 1e-9)) throw std::invalid_argument("natural_residual: x is not feasible");
  const auto f = F(x);
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] - f[i];
  NaturalResidual out;
  out.r = project_box_budget(v, set).point;
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - out.r[i]) * (x[i] - out.r[i]);
  out.norm = std::sqrt(sq);
  return out;
}

std::vector<double> mu_vector(std::span<const double> x, const PseudoGradient& F) {
  auto mu = F(x);
  for (double& m : mu) m = -m;
  return mu;
}

double interior_mu_spread(std::span<const double> x, std::span<const double> mu,
                          std::span<const double> upper, double tol) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  int count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > tol && x[i] < upper[i] - tol) {
      lo = std::min(lo, mu[i]);
      hi = std::max(hi, mu[i]);
      ++count;
    }
  }
  return count < 2 ? 0.0 : hi - lo;
}

std::vector<double> ve_closed_form(const PseudoGradient& F, const FeasibleSet& set) {
  std::vector<double> target(F.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = F.surpluses()[i] + F.prices()[i];
  return project_box_budget(target, set).point;
}

void SolverTrace::write_csv(std::ostream& os) const {
  os << "iteration,residual,step,mu_spread\r\n";
  char buf[128];
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    double spread = 0.0;
    if (!r.mu.empty()) {
      auto [lo, hi] = std::minmax_element(r.mu.begin(), r.mu.end());
      spread = *hi - *lo;
    }
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\r\n", k, r.residual, r.step, spread);
    os << buf;
  }
}

SolodovSvaiter::SolodovSvaiter(PseudoGradient F, FeasibleSet set, SSConfig cfg,
                               std::vector<double> x0)
    : F_(std::move(F)), set_(std::move(set)), cfg_(cfg), x_(std::move(x0)) {
  cfg_.validate();
  if (F_.size() != set_.size()) throw std::invalid_argument("SolodovSvaiter: size mismatch");
  if (!set_.contains(x_, 1e-9)) throw std::invalid_argument("SolodovSvaiter: x0 is not feasible");
  residual_ = natural_residual(x_, F_, set_);
}

bool SolodovSvaiter::step() {
  const std::size_t n = x_.size();
  IterationRecord rec;
  rec.x = x_;
  rec.residual = residual_.norm;
  rec.mu = mu_vector(x_, F_);

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x_[i] - residual_.r[i];
  const double d_sq = dot(d, d);
  if (d_sq == 0.0) {
    rec.z = x_;
    trace_.records.push_back(std::move(rec));
    return true;
  }

  std::vector<double> z(n);
  double t = cfg_.gamma;
  bool accepted = false;
  std::vector<double> fz;
  for (int m = 0; m <= cfg_.max_backtracks; ++m, t *= cfg_.beta) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x_[i] - t * d[i];
    fz = F_(z);
    if (face_aware_inner(fz, x_, residual_.r, set_.budget()) >= cfg_.delta * d_sq) {
      accepted = true;
      break;
    }
  }
  rec.z = z;
  if (!accepted) {
    rec.step = 0.0;
    trace_.records.push_back(std::move(rec));
    return false;
  }
  rec.step = t;
  trace_.records.push_back(std::move(rec));

  // An Armijo point that already solves the VI ends the iteration there. The
  // halfspace then only touches X along a face and its dual multiplier is
  // unbounded.
  auto at_z = natural_residual(z, F_, set_);
  if (at_z.norm <= cfg_.residual_tol) {
    x_ = std::move(z);
    residual_ = std::move(at_z);
    return true;
  }
  x_ = project_halfspace_then_set(x_, fz, z, set_);
  residual_ = natural_residual(x_, F_, set_);
  return true;
}

void SolodovSvaiter::finish() {
  IterationRecord rec;
  rec.x = x_;
  rec.residual = residual_.norm;
  rec.step = 0.0;
  rec.z = x_;
  rec.mu = mu_vector(x_, F_);
  trace_.records.push_back(std::move(rec));
}

VeSolution solve_ve(const PseudoGradient& F, const FeasibleSet& set, const SSConfig& cfg,
                    std::vector<double> x0) {
  SolodovSvaiter solver(F, set, cfg, std::move(x0));
  VeSolution out;
  int steps = 0;
  while (!solver.converged()) {
    if (steps + 1 >= cfg.max_iterations) {
      out.status = SolveStatus::kMaxIterations;
      break;
    }
    if (!solver.step()) {
      out.status = SolveStatus::kArmijoFailure;
      break;
    }
    ++steps;
  }
  solver.finish();
  out.x = solver.iterate();
  out.trace = solver.take_trace();
  return out;
}

VeSolution solve_ve(const PseudoGradient& F, const FeasibleSet& set, const SSConfig& cfg) {
  return solve_ve(F, set, cfg, std::vector<double>(F.size(), 0.0));
}

}  // namespace gridtrade
