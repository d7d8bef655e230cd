#include "freeopt/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "freeopt/errors.hpp"
#include "freeopt/rng.hpp"

namespace freeopt {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Stream ids inside the counter generator.
constexpr std::uint64_t kStreamNormal = 1;
constexpr std::uint64_t kStreamPick = 2;

void check_size(double x) {
  if (!(x >= 0.0)) throw DomainError("trade size must be >= 0, got " + std::to_string(x));
}

// Risky reserves in units and numeraire reserves of the equivalent CPMM.
struct Reserves {
  double risky;
  double numeraire;
};

Reserves cpmm_reserves(const PoolState& pool) {
  const double risky = pool.liquidity_L / pool.cex_price_P0;
  return {risky, risky * pool.spot_price()};
}

}  // namespace

void PoolState::validate() const {
  if (!(liquidity_L > 0.0) || !std::isfinite(liquidity_L))
    throw ConfigError("liquidity_L", "must be > 0");
  if (!(cex_price_P0 > 0.0) || !std::isfinite(cex_price_P0))
    throw ConfigError("cex_price_P0", "must be > 0");
  if (!(std::abs(price_gap_delta) < 1.0))
    throw ConfigError("price_gap_delta", "must satisfy |delta| < 1");
}

PoolState PoolState::mirrored() const noexcept {
  PoolState out = *this;
  out.price_gap_delta = effective_gap();
  out.side = TradeSide::buy;
  return out;
}

double dex_cost(const PoolState& pool, double x) {
  check_size(x);
  const double spot = pool.spot_price();
  if (pool.cost_model == CostModel::quadratic) {
    const double depth = pool.liquidity_L / pool.cex_price_P0;
    return spot * x + spot * x * x / depth;
  }
  const auto [risky, numeraire] = cpmm_reserves(pool);
  if (x >= risky) return std::numeric_limits<double>::infinity();
  return numeraire * x / (risky - x);
}

double dex_marginal_price(const PoolState& pool, double x) {
  check_size(x);
  const double spot = pool.spot_price();
  if (pool.cost_model == CostModel::quadratic) {
    const double depth = pool.liquidity_L / pool.cex_price_P0;
    return spot * (1.0 + 2.0 * x / depth);
  }
  const auto [risky, numeraire] = cpmm_reserves(pool);
  if (x >= risky) return std::numeric_limits<double>::infinity();
  const double rem = risky - x;
  return numeraire * risky / (rem * rem);
}

double dex_cost_curvature(const PoolState& pool, double x) {
  check_size(x);
  const double spot = pool.spot_price();
  if (pool.cost_model == CostModel::quadratic) {
    const double depth = pool.liquidity_L / pool.cex_price_P0;
    return 2.0 * spot / depth;
  }
  const auto [risky, numeraire] = cpmm_reserves(pool);
  if (x >= risky) return std::numeric_limits<double>::infinity();
  const double rem = risky - x;
  return 2.0 * numeraire * risky / (rem * rem * rem);
}

double units_at_marginal_price(const PoolState& pool, double price) {
  const double spot = pool.spot_price();
  if (price <= spot) return 0.0;
  if (pool.cost_model == CostModel::quadratic) {
    const double depth = pool.liquidity_L / pool.cex_price_P0;
    return 0.5 * depth * (price / spot - 1.0);
  }
  const double risky = pool.liquidity_L / pool.cex_price_P0;
  return risky * (1.0 - std::sqrt(spot / price));
}

double normal_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double hazard(double z) noexcept {
  if (z > 8.0) {
    // Mills-ratio continued fraction, (1 - Phi)/phi = 1/(z + 1/(z + 2/(z + ...))),
    // evaluated bottom-up. 60 levels are far past convergence for z > 8.
    double f = z;
    for (int k = 60; k >= 1; --k) f = z + k / f;
    return f;
  }
  const double tail = 0.5 * std::erfc(z * kInvSqrt2);
  return normal_pdf(z) / tail;
}

double hazard_derivative(double z) noexcept {
  const double h = hazard(z);
  return h * (h - z);
}

ReturnModel ReturnModel::normal(double sigma) {
  ReturnModel m;
  m.kind = ReturnKind::normal;
  m.volatility_sigma = sigma;
  return m;
}

ReturnModel ReturnModel::empirical(std::vector<double> s) {
  ReturnModel m;
  m.kind = ReturnKind::empirical;
  m.samples = std::move(s);
  return m;
}

ReturnModel ReturnModel::mixture(std::vector<MixtureComponent> c) {
  ReturnModel m;
  m.kind = ReturnKind::mixture;
  m.components = std::move(c);
  return m;
}

void ReturnModel::validate() const {
  if (!(truncation_floor <= 0.0)) throw ConfigError("truncation_floor", "must be <= 0");
  switch (kind) {
    case ReturnKind::normal:
      if (!(volatility_sigma >= 0.0) || !std::isfinite(volatility_sigma))
        throw ConfigError("volatility_sigma", "must be a finite value >= 0");
      return;
    case ReturnKind::empirical: {
      if (samples.empty()) throw ConfigError("samples", "empirical return set is empty");
      for (double s : samples)
        if (!std::isfinite(s)) throw ConfigError("samples", "non-finite return");
      const double m = mean();
      if (std::abs(m) > 0.01 * stddev() + 1e-15)
        throw ConfigError("samples", "empirical returns must be centred (mean " + std::to_string(m) + ")");
      return;
    }
    case ReturnKind::mixture: {
      if (components.empty()) throw ConfigError("components", "mixture has no components");
      double total = 0.0;
      for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw ConfigError("components.weight", "weights must be > 0");
        if (!(c.stddev >= 0.0)) throw ConfigError("components.stddev", "must be >= 0");
        total += c.weight;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError("components.weight", "weights must sum to 1");
      if (std::abs(mean()) > 1e-12 + 1e-9 * stddev())
        throw ConfigError("components.mean", "mixture mean must be 0");
      return;
    }
  }
}

double ReturnModel::mean() const {
  switch (kind) {
    case ReturnKind::normal:
      return 0.0;
    case ReturnKind::empirical:
      return samples.empty() ? 0.0 : std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
    case ReturnKind::mixture: {
      double m = 0.0;
      for (const auto& c : components) m += c.weight * c.mean;
      return m;
    }
  }
  return 0.0;
}

double ReturnModel::stddev() const {
  switch (kind) {
    case ReturnKind::normal:
      return volatility_sigma;
    case ReturnKind::empirical: {
      if (samples.empty()) return 0.0;
      const double m = mean();
      double ss = 0.0;
      for (double s : samples) ss += (s - m) * (s - m);
      return std::sqrt(ss / samples.size());
    }
    case ReturnKind::mixture: {
      const double m = mean();
      double second = 0.0;
      for (const auto& c : components) second += c.weight * (c.stddev * c.stddev + c.mean * c.mean);
      return std::sqrt(std::max(0.0, second - m * m));
    }
  }
  return 0.0;
}

ReturnModel ReturnModel::scaled(double factor) const {
  ReturnModel out = *this;
  out.volatility_sigma *= std::abs(factor);
  for (double& s : out.samples) s *= factor;
  for (auto& c : out.components) {
    c.mean *= factor;
    c.stddev *= std::abs(factor);
  }
  return out;
}

ReturnModel ReturnModel::negated() const { return scaled(-1.0); }

std::vector<double> sample_returns(const ReturnModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  std::vector<double> out(n);
  const CounterRng gauss(seed, kStreamNormal);
  const CounterRng pick(seed, kStreamPick);
  switch (model.kind) {
    case ReturnKind::normal:
      for (std::size_t i = 0; i < n; ++i) out[i] = model.volatility_sigma * gauss.normal(i);
      break;
    case ReturnKind::empirical: {
      const auto m = static_cast<double>(model.samples.size());
      for (std::size_t i = 0; i < n; ++i) {
        auto idx = static_cast<std::size_t>(pick.uniform(i) * m);
        out[i] = model.samples[std::min(idx, model.samples.size() - 1)];
      }
      break;
    }
    case ReturnKind::mixture: {
      std::vector<double> cumulative;
      double acc = 0.0;
      for (const auto& c : model.components) cumulative.push_back(acc += c.weight);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = pick.uniform(i) * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const auto& c = model.components[std::min<std::size_t>(it - cumulative.begin(), model.components.size() - 1)];
        out[i] = c.stddev > 0.0 ? c.mean + c.stddev * gauss.normal(i) : c.mean;
      }
      break;
    }
  }
  for (double& r : out) r = std::max(r, model.truncation_floor);
  return out;
}

}  // namespace freeopt
