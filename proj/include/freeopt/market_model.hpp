#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace freeopt {

enum class TradeSide { buy, sell };

// quadratic: P'(0)x + P'(0)x^2/(L/P0), the small-trade CPMM approximation.
// cpmm: exact constant-product pool with the same reserves and spot price.
enum class CostModel { quadratic, cpmm };

// One AMM pool quoted against a CEX reference price. All values in the
// numeraire; trade sizes x are in units of the risky asset.
struct PoolState {
  double liquidity_L = 1.0;     // risky reserves valued at CEX prices
  double cex_price_P0 = 1.0;    // numeraire per risky unit
  double price_gap_delta = 0.0; // (P0 - P'_DEX(0)) / P0
  TradeSide side = TradeSide::buy;
  CostModel cost_model = CostModel::quadratic;

  void validate() const;

  // Gap seen by a buyer after reflecting sell-side pools.
  double effective_gap() const noexcept { return side == TradeSide::buy ? price_gap_delta : -price_gap_delta; }

  // Buy-side pool in the reflected market.
  PoolState mirrored() const noexcept;

  // Marginal DEX price at size zero, P'_DEX(0) = P0 (1 - delta).
  double spot_price() const noexcept { return cex_price_P0 * (1.0 - effective_gap()); }
};

// Total numeraire cost of buying x risky units. Throws DomainError for x < 0.
double dex_cost(const PoolState& pool, double x);

// d dex_cost / dx.
double dex_marginal_price(const PoolState& pool, double x);

// d^2 dex_cost / dx^2.
double dex_cost_curvature(const PoolState& pool, double x);

// Trade size (risky units) at which the marginal DEX price reaches `price`.
// Returns 0 when the spot price is already above it.
double units_at_marginal_price(const PoolState& pool, double price);

double normal_pdf(double z) noexcept;
double normal_cdf(double z) noexcept;
double normal_quantile(double p);

// Standard normal hazard phi(z) / (1 - Phi(z)), stable out to z = 40 and beyond.
double hazard(double z) noexcept;

// lambda'(z) = lambda(z) (lambda(z) - z).
double hazard_derivative(double z) noexcept;

enum class ReturnKind { normal, empirical, mixture };

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 0.0;  // 0 gives a point mass
};

// Distribution of the CEX return over one option window (or per second,
// before time scaling; see BuilderProblem).
struct ReturnModel {
  ReturnKind kind = ReturnKind::normal;
  double volatility_sigma = 0.0;
  std::vector<double> samples;
  std::vector<MixtureComponent> components;
  double truncation_floor = -1.0;

  static ReturnModel normal(double sigma);
  static ReturnModel empirical(std::vector<double> samples);
  static ReturnModel mixture(std::vector<MixtureComponent> components);

  // Throws ConfigError on sigma < 0, empty sample sets, bad weights or a
  // non-zero mean.
  void validate() const;

  double mean() const;
  double stddev() const;

  // Returns multiplied by `factor` (used for time scaling).
  ReturnModel scaled(double factor) const;
  // r -> -r, used when reflecting sell-side problems.
  ReturnModel negated() const;
};

// Deterministic in (model, n, seed). Every entry is >= truncation_floor.
std::vector<double> sample_returns(const ReturnModel& model, std::size_t n, std::uint64_t seed);

}  // namespace freeopt
