#include "freeopt/builder_option.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "freeopt/errors.hpp"

namespace freeopt {

namespace {

constexpr double kInvPhi = 0.61803398874989484820;  // 1/golden ratio
constexpr int kGridPoints = 64;
constexpr int kGoldenIterations = 120;
constexpr int kNewtonIterations = 40;
constexpr double kStationarityTol = 1e-8;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// d Pi_0 / dy and d^2 Pi_0 / dy^2 on a buy-side pool.
double commit_slope(const BuilderProblem& bp, double y) {
  const double p0 = bp.pool.cex_price_P0;
  return 1.0 - dex_marginal_price(bp.pool, y / p0) / p0;
}

double commit_curvature(const BuilderProblem& bp, double y) {
  const double p0 = bp.pool.cex_price_P0;
  return -dex_cost_curvature(bp.pool, y / p0) / (p0 * p0);
}

// E[max(0, A + s Z)] = s psi(A/s), psi(z) = phi(z) + z Phi(z), written so the
// left tail does not cancel.
double expected_positive_part(double a, double s) {
  const double z = a / s;
  if (z >= 0.0) return a * normal_cdf(z) + s * normal_pdf(z);
  return s * normal_pdf(z) * (1.0 + z / hazard(-z));
}

// |g| over the gross size of its terms, with A' = 1 - C'/P0 split so that the
// residual stays meaningful when Phi(z) = 1 and phi(z) underflows.
double relative_residual(const BuilderProblem& bp, double sigma, double y) {
  const double a = profit_at_commit(bp, y) + bp.penalty_p;
  const double z = a / (sigma * y);
  const double p0 = bp.pool.cex_price_P0;
  const double price_ratio = dex_marginal_price(bp.pool, y / p0) / p0;
  const double cdf = normal_cdf(z);
  const double t2 = sigma * normal_pdf(z);
  const double g = (1.0 - price_ratio) * cdf + t2;
  const double scale = (1.0 + price_ratio) * cdf + t2;
  return scale > 0.0 ? std::abs(g) / scale : 0.0;
}

// Candidate positions: dense near zero (the optimum scales with sigma L and
// can be tiny relative to the cap) plus a uniform sweep.
std::vector<double> search_grid(double y_max) {
  std::vector<double> grid;
  grid.reserve(2 * kGridPoints + 1);
  grid.push_back(0.0);
  for (int k = 1; k <= kGridPoints; ++k) grid.push_back(y_max * k / kGridPoints);
  for (int k = 0; k < kGridPoints; ++k) grid.push_back(y_max * std::pow(10.0, -10.0 + 10.0 * k / kGridPoints));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

struct Maximum {
  double y;
  double value;
  int evaluations;
};

// Grid scan followed by golden-section refinement inside the best bracket.
template <class F>
Maximum maximize_bracketed(F&& f, double y_max) {
  const auto grid = search_grid(y_max);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = f(grid[i]);
    if (values[i] > best_value) {
      best_value = values[i];
      best = i;
    }
  }
  int evals = static_cast<int>(grid.size());
  double lo = grid[best == 0 ? 0 : best - 1];
  double hi = grid[std::min(best + 1, grid.size() - 1)];
  double c = hi - kInvPhi * (hi - lo);
  double d = lo + kInvPhi * (hi - lo);
  double fc = f(c), fd = f(d);
  evals += 2;
  for (int it = 0; it < kGoldenIterations && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - kInvPhi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + kInvPhi * (hi - lo);
      fd = f(d);
    }
    ++evals;
  }
  Maximum out{fc >= fd ? c : d, std::max(fc, fd), evals};
  if (best_value > out.value) out = {grid[best], best_value, evals};
  return out;
}

OptionDecision deterministic_decision(const BuilderProblem& bp) {
  const CommitOptimum commit = best_commit_position(bp);
  OptionDecision d;
  d.optimal_y = commit.y;
  d.no_option_value = commit.profit;
  d.value_V = std::max(-bp.penalty_p, commit.profit);
  d.exercise_prob_P = commit.profit < -bp.penalty_p ? 1.0 : 0.0;
  d.z_star = nan();
  d.sigma_eff = 0.0;
  d.post_trade_overshoot = dex_marginal_price(bp.pool, commit.y / bp.pool.cex_price_P0) / bp.pool.cex_price_P0 - 1.0;
  d.interior = commit.y > 0.0;
  return d;
}

void finish(const BuilderProblem& bp, OptionDecision& d) {
  const double p0 = bp.pool.cex_price_P0;
  const CommitOptimum commit = best_commit_position(bp);
  d.no_option_value = commit.profit;
  // Baseline max{-p, max_y Pi_0}: with p = 0 this is the non-negative clamp
  // of the no-option value. Noise below zero is floored.
  d.net_option_value = std::max(0.0, d.value_V - std::max(-bp.penalty_p, commit.profit));
  d.post_trade_overshoot = dex_marginal_price(bp.pool, d.optimal_y / p0) / p0 - 1.0;
}

}  // namespace

void BuilderProblem::validate() const {
  if (!std::isfinite(atomic_mev_mu)) throw ConfigError("atomic_mev_mu", "must be finite");
  try {
    pool.validate();
  } catch (const ConfigError& e) {
    throw e.nested_under("pool");
  }
  try {
    returns.validate();
  } catch (const ConfigError& e) {
    throw e.nested_under("returns");
  }
  if (!(window_tau > 0.0) || !std::isfinite(window_tau)) throw ConfigError("window_tau", "must be > 0");
  if (!(penalty_p >= 0.0) || !std::isfinite(penalty_p)) throw ConfigError("penalty_p", "must be >= 0");
  if (!(time_scaling_exponent >= 0.5 && time_scaling_exponent <= 1.0))
    throw ConfigError("time_scaling_exponent", "must lie in [0.5, 1]");
}

double BuilderProblem::time_scale() const { return std::pow(window_tau, time_scaling_exponent); }

ReturnModel BuilderProblem::window_returns() const { return returns.scaled(time_scale()); }

double BuilderProblem::sigma_eff() const { return returns.stddev() * time_scale(); }

BuilderProblem BuilderProblem::normalized() const {
  if (pool.side == TradeSide::buy) return *this;
  BuilderProblem out = *this;
  out.pool = pool.mirrored();
  out.returns = returns.negated();
  return out;
}

double profit_at_commit(const BuilderProblem& problem, double y) {
  if (!(y >= 0.0)) throw DomainError("position y must be >= 0");
  return problem.atomic_mev_mu + y - dex_cost(problem.pool, y / problem.pool.cex_price_P0);
}

CommitOptimum best_commit_position(const BuilderProblem& problem) {
  const double y = problem.pool.cex_price_P0 * units_at_marginal_price(problem.pool, problem.pool.cex_price_P0);
  return {y, profit_at_commit(problem, y)};
}

double max_position(const BuilderProblem& problem) {
  const double p0 = problem.pool.cex_price_P0;
  return p0 * units_at_marginal_price(problem.pool, 3.0 * p0);
}

double objective_closed_form(const BuilderProblem& problem, double y) {
  if (problem.returns.kind != ReturnKind::normal)
    throw UnsupportedModelError("closed-form objective needs normal returns; use the Monte Carlo path");
  const BuilderProblem bp = problem.normalized();
  const double p = bp.penalty_p;
  const double pi0 = profit_at_commit(bp, y);
  const double s = bp.sigma_eff() * y;
  if (s == 0.0) return std::max(-p, pi0);
  return expected_positive_part(pi0 + p, s) - p;
}

double objective_slope(const BuilderProblem& problem, double y) {
  if (problem.returns.kind != ReturnKind::normal)
    throw UnsupportedModelError("closed-form slope needs normal returns");
  const BuilderProblem bp = problem.normalized();
  const double sigma = bp.sigma_eff();
  const double a = profit_at_commit(bp, y) + bp.penalty_p;
  const double slope = commit_slope(bp, y);
  if (sigma == 0.0 || y == 0.0) return a >= 0.0 ? slope : 0.0;
  const double z = a / (sigma * y);
  return slope * normal_cdf(z) + sigma * normal_pdf(z);
}

OptionDecision solve(const BuilderProblem& problem) {
  problem.validate();
  if (problem.returns.kind != ReturnKind::normal)
    throw UnsupportedModelError("closed-form solve needs normal returns; use solve_mc");
  const BuilderProblem bp = problem.normalized();
  const double sigma = bp.sigma_eff();
  if (sigma == 0.0) return deterministic_decision(bp);

  const double p = bp.penalty_p;
  const double y_max = max_position(bp);
  auto f = [&](double y) { return objective_closed_form(bp, y); };
  Maximum best = maximize_bracketed(f, y_max);
  OptionDecision d;
  d.iterations = best.evaluations;
  d.sigma_eff = sigma;

  double y = best.y;
  const bool interior = y > 1e-12 * y_max && y < y_max * (1.0 - 1e-12);
  if (interior) {
    // Newton on the slope, kept inside a shrinking bracket.
    double lo = 0.5 * y, hi = std::min(y_max, 2.0 * y);
    for (int it = 0; it < kNewtonIterations; ++it) {
      const double a = profit_at_commit(bp, y) + p;
      const double z = a / (sigma * y);
      const double a1 = commit_slope(bp, y);
      const double a2 = commit_curvature(bp, y);
      const double g = a1 * normal_cdf(z) + sigma * normal_pdf(z);
      const double dz = (a1 * y - a) / (sigma * y * y);
      const double g1 = a2 * normal_cdf(z) + normal_pdf(z) * dz * (a1 - sigma * z);
      ++d.iterations;
      if (g > 0.0) lo = std::max(lo, y); else hi = std::min(hi, y);
      if (relative_residual(bp, sigma, y) < 1e-14) break;
      double next = (g1 < 0.0) ? y - g / g1 : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == y) break;
      y = next;
    }
    const double residual = relative_residual(bp, sigma, y);
    if (!(residual <= kStationarityTol)) throw NumericalError("closed-form solve did not reach stationarity", y, residual);
    d.stationarity_residual = residual;
    d.interior = true;
  } else {
    y = best.y <= 1e-12 * y_max ? 0.0 : y_max;
  }

  d.optimal_y = y;
  const double a = profit_at_commit(bp, y) + p;
  if (y > 0.0) {
    d.value_V = objective_closed_form(bp, y);
    d.z_star = -a / (sigma * y);
    d.exercise_prob_P = normal_cdf(d.z_star);
  } else {
    d.value_V = std::max(-p, bp.atomic_mev_mu);
    d.z_star = nan();
    d.exercise_prob_P = bp.atomic_mev_mu < -p ? 1.0 : 0.0;
  }
  finish(bp, d);
  return d;
}

OptionDecision solve_mc(const BuilderProblem& problem, std::size_t n_samples, std::uint64_t seed) {
  problem.validate();
  if (n_samples < 1000) throw ConfigError("n_samples", "Monte Carlo path needs at least 1000 samples");
  const auto draws = sample_returns(problem.window_returns(), n_samples, seed);
  return solve_on_samples(problem, draws);
}

OptionDecision solve_on_samples(const BuilderProblem& problem, std::span<const double> window_returns) {
  problem.validate();
  if (window_returns.empty()) throw ConfigError("n_samples", "no return samples");
  const BuilderProblem bp = problem.normalized();
  const double sign = problem.pool.side == TradeSide::buy ? 1.0 : -1.0;
  const std::size_t n = window_returns.size();
  const double p = bp.penalty_p;

  std::vector<double> r(window_returns.begin(), window_returns.end());
  for (double& v : r) v *= sign;
  if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; })) return deterministic_decision(bp);

  // Sorted draws with suffix sums make each objective evaluation O(log n);
  // every candidate y sees the same draws.
  std::vector<double> sorted = r;
  std::sort(sorted.begin(), sorted.end());
  std::vector<long double> suffix(n + 1, 0.0L);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + sorted[i];
  const auto inv_n = 1.0L / static_cast<long double>(n);

  auto f = [&](double y) -> double {
    const double a = profit_at_commit(bp, y) + p;
    if (y == 0.0) return std::max(-p, bp.atomic_mev_mu);
    const double cut = -a / y;
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), cut) - sorted.begin());
    const long double total = static_cast<long double>(n - k) * a + static_cast<long double>(y) * suffix[k];
    return static_cast<double>(total * inv_n) - p;
  };
  const double y_max = max_position(bp);
  Maximum best = maximize_bracketed(f, y_max);
  double y = best.y <= 1e-12 * y_max ? 0.0 : best.y;

  OptionDecision d;
  d.iterations = best.evaluations;
  d.optimal_y = y;
  d.sigma_eff = bp.window_returns().stddev();
  d.interior = y > 0.0 && y < y_max;

  // Direct pass at the optimum for value, standard error and exercise rate.
  const double pi0 = profit_at_commit(bp, y);
  long double sum = 0.0L, sum_sq = 0.0L;
  std::size_t exercised = 0;
  for (double v : r) {
    const double pi = pi0 + v * y;
    const bool withhold = pi < -p;
    const double payoff = withhold ? -p : pi;
    exercised += withhold ? 1 : 0;
    sum += payoff;
    sum_sq += static_cast<long double>(payoff) * payoff;
  }
  const long double mean = sum * inv_n;
  const long double var = std::max(0.0L, sum_sq * inv_n - mean * mean);
  d.value_V = static_cast<double>(mean);
  d.value_se = n > 1 ? static_cast<double>(std::sqrt(var * n / (n - 1)) / std::sqrt(static_cast<long double>(n))) : 0.0;
  d.exercise_prob_P = static_cast<double>(exercised) / static_cast<double>(n);
  d.z_star = (y > 0.0 && d.sigma_eff > 0.0) ? -(pi0 + p) / (d.sigma_eff * y) : nan();
  finish(bp, d);
  return d;
}

EnvelopeDerivatives envelope_derivatives(const BuilderProblem& problem) {
  const OptionDecision d = solve(problem);
  return {1.0 - d.exercise_prob_P, -d.exercise_prob_P};
}

}  // namespace freeopt
