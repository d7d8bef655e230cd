#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "freeopt/market_model.hpp"

namespace freeopt {

// One instance of the builder's sizing problem: choose a DEX position y
// (numeraire at CEX prices) at commitment, then reveal or withhold at the end
// of the window once the CEX return r is known.
//
//   Pi_0(y)   = mu + y - P_DEX(y / P0)
//   Pi_tau(y) = Pi_0(y) + r y
//   V*        = max_y E[max{-p, Pi_tau(y)}]
//
// `returns` describes the return over one second; the window return is the
// same model scaled by tau^s (s = time_scaling_exponent, in [0.5, 1]).
struct BuilderProblem {
  double atomic_mev_mu = 0.0;
  PoolState pool;
  ReturnModel returns;
  double window_tau = 1.0;
  double penalty_p = 0.0;
  double time_scaling_exponent = 0.5;

  void validate() const;

  double time_scale() const;
  // Window return model, before reflection.
  ReturnModel window_returns() const;
  // Per-window volatility used by the closed form.
  double sigma_eff() const;
  // Buy-side equivalent: sell problems are reflected (delta -> -delta, r -> -r).
  BuilderProblem normalized() const;
};

struct OptionDecision {
  double optimal_y = 0.0;
  double value_V = 0.0;
  double exercise_prob_P = 0.0;
  double net_option_value = 0.0;
  double z_star = 0.0;                // -(Pi_0(y*) + p) / (sigma y*); NaN when sigma y* = 0
  double post_trade_overshoot = 0.0;  // (P'_DEX(x*) - P0) / P0
  double no_option_value = 0.0;       // max_y Pi_0(y)
  double sigma_eff = 0.0;
  double value_se = 0.0;              // Monte Carlo standard error, 0 for the closed form
  double stationarity_residual = 0.0; // |dV/dy| relative to its two terms; 0 at a boundary optimum
  int iterations = 0;
  bool interior = false;
};

struct EnvelopeDerivatives {
  double d_value_d_mu = 0.0;  // 1 - P*
  double d_value_d_p = 0.0;   // -P*
};

struct CommitOptimum {
  double y = 0.0;
  double profit = 0.0;
};

// Pi_0(y). Throws DomainError for y < 0.
double profit_at_commit(const BuilderProblem& problem, double y);

// argmax_y Pi_0(y) over y >= 0 (the deterministic arbitrage without option).
CommitOptimum best_commit_position(const BuilderProblem& problem);

// Search cap: the position at which the marginal DEX price is 3 P0.
double max_position(const BuilderProblem& problem);

// E[max{-p, Pi_tau(y)}] under normal returns:
//   (Pi_0 + p) Phi(z_p) + sigma y phi(z_p) - p,  z_p = (Pi_0 + p) / (sigma y).
// Throws UnsupportedModelError for non-normal models.
double objective_closed_form(const BuilderProblem& problem, double y);

// d/dy of objective_closed_form.
double objective_slope(const BuilderProblem& problem, double y);

// Closed-form optimum (normal returns). Golden-section on a bracketing grid,
// then Newton polish on the slope. Throws NumericalError if an interior
// optimum cannot be made stationary.
OptionDecision solve(const BuilderProblem& problem);

// Sample-average optimum with common random numbers across candidate y.
// Requires n_samples >= 1000.
OptionDecision solve_mc(const BuilderProblem& problem, std::size_t n_samples, std::uint64_t seed);

// Same as solve_mc on caller-supplied window returns (original trade side).
OptionDecision solve_on_samples(const BuilderProblem& problem, std::span<const double> window_returns);

// Envelope identities at the closed-form optimum.
EnvelopeDerivatives envelope_derivatives(const BuilderProblem& problem);

}  // namespace freeopt
