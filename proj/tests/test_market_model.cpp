#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "freeopt/errors.hpp"
#include "freeopt/market_model.hpp"
#include "oracles.hpp"

using namespace freeopt;

namespace {

PoolState pool(double L, double P0, double delta, CostModel model = CostModel::quadratic) {
  PoolState p;
  p.liquidity_L = L;
  p.cex_price_P0 = P0;
  p.price_gap_delta = delta;
  p.cost_model = model;
  return p;
}

}  // namespace

TEST_CASE("dex_cost examples") {
  CHECK(dex_cost(pool(1, 1, 0), 0.0) == 0.0);
  CHECK(dex_cost(pool(1, 1, 0), 0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(dex_cost(pool(100, 2, 0.01), 1.0) == doctest::Approx(2.0196).epsilon(1e-14));
  CHECK_THROWS_AS(dex_cost(pool(1, 1, 0), -1e-9), DomainError);
}

TEST_CASE("dex_marginal_price examples") {
  CHECK(dex_marginal_price(pool(1, 1, 0), 0.0) == 1.0);
  const double sigma = 0.01;
  const double mp = dex_marginal_price(pool(1, 1, 0), 0.61 * sigma);
  CHECK(mp == doctest::Approx(1.0122).epsilon(1e-14));
  CHECK((mp - 1.0) / sigma == doctest::Approx(1.22).epsilon(1e-12));
  CHECK(dex_marginal_price(pool(10, 1, 0), 1.0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK_THROWS_AS(dex_marginal_price(pool(1, 1, 0), -1.0), DomainError);
}

TEST_CASE("spot price and sell-side reflection") {
  auto p = pool(50, 3, 0.02);
  CHECK(dex_marginal_price(p, 0.0) == doctest::Approx(3 * 0.98));
  p.side = TradeSide::sell;
  p.price_gap_delta = -0.02;  // DEX overpriced; a seller earns the gap
  CHECK(p.effective_gap() == doctest::Approx(0.02));
  const PoolState m = p.mirrored();
  CHECK(m.side == TradeSide::buy);
  CHECK(dex_cost(p, 1.5) == doctest::Approx(dex_cost(m, 1.5)));
}

TEST_CASE("pool validation") {
  CHECK_THROWS_AS(pool(0, 1, 0).validate(), ConfigError);
  CHECK_THROWS_AS(pool(1, -1, 0).validate(), ConfigError);
  CHECK_THROWS_AS(pool(1, 1, 1.0).validate(), ConfigError);
  CHECK_NOTHROW(pool(1, 1, -0.5).validate());
}

TEST_CASE("dex_cost is convex on random triples") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto model : {CostModel::quadratic, CostModel::cpmm}) {
    for (int i = 0; i < 2000; ++i) {
      const auto p = pool(1 + 999 * u(gen), 0.1 + 10 * u(gen), 0.2 * u(gen) - 0.1, model);
      const double cap = 0.9 * p.liquidity_L / p.cex_price_P0;
      double x1 = cap * u(gen), x2 = cap * u(gen);
      if (x1 > x2) std::swap(x1, x2);
      const double t = u(gen);
      const double lhs = dex_cost(p, t * x1 + (1 - t) * x2);
      const double rhs = t * dex_cost(p, x1) + (1 - t) * dex_cost(p, x2);
      CHECK(lhs <= rhs + 1e-12 * std::abs(rhs));
    }
  }
}

TEST_CASE("marginal price matches central finite difference") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto model : {CostModel::quadratic, CostModel::cpmm}) {
    for (int i = 0; i < 500; ++i) {
      const auto p = pool(1 + 999 * u(gen), 0.5 + 2 * u(gen), 0.1 * u(gen) - 0.05, model);
      const double x = (0.05 + 0.5 * u(gen)) * p.liquidity_L / p.cex_price_P0;
      const double h = 1e-5 * x;
      const double fd = (dex_cost(p, x + h) - dex_cost(p, x - h)) / (2 * h);
      const double mp = dex_marginal_price(p, x);
      CHECK(std::abs(fd - mp) / mp < 1e-8);
      // Monotone in size.
      CHECK(dex_marginal_price(p, 1.01 * x) > mp);
    }
  }
}

TEST_CASE("exact CPMM agrees with the quadratic form to first order for small trades") {
  const auto q = pool(1000, 2, 0.003);
  const auto c = pool(1000, 2, 0.003, CostModel::cpmm);
  for (double frac : {1e-6, 1e-4, 1e-3}) {
    const double x = frac * q.liquidity_L / q.cex_price_P0;
    CHECK(dex_cost(c, x) == doctest::Approx(dex_cost(q, x)).epsilon(2 * frac));
    CHECK(dex_marginal_price(c, x) == doctest::Approx(dex_marginal_price(q, x)).epsilon(4 * frac));
  }
  CHECK(std::isinf(dex_cost(c, 500.0)));
}

TEST_CASE("units_at_marginal_price inverts the marginal price") {
  for (auto model : {CostModel::quadratic, CostModel::cpmm}) {
    const auto p = pool(400, 1.7, 0.01, model);
    const double x = units_at_marginal_price(p, 3 * 1.7);
    CHECK(dex_marginal_price(p, x) == doctest::Approx(3 * 1.7).epsilon(1e-12));
    CHECK(units_at_marginal_price(p, 0.5) == 0.0);
  }
}

TEST_CASE("hazard examples") {
  CHECK(hazard(0.0) == doctest::Approx(0.7978845608028654).epsilon(1e-15));
  CHECK(hazard(0.6120) == doctest::Approx(1.2240).epsilon(1e-4));
  CHECK(std::abs(hazard(-30.0)) < 1e-12);
  // Far tail stays finite and close to z + 1/z.
  CHECK(std::isfinite(hazard(40.0)));
  CHECK(hazard(40.0) == doctest::Approx(40.0 + 1.0 / 40.0).epsilon(1e-6));
}

TEST_CASE("hazard agrees with the extended-precision ratio and is continuous at the switch") {
  for (double z = -10.0; z <= 20.0; z += 0.25) CHECK(hazard(z) == doctest::Approx(oracle::hazard(z)).epsilon(1e-13));
  CHECK(hazard(8.0 + 1e-12) == doctest::Approx(hazard(8.0 - 1e-12)).epsilon(1e-12));
}

TEST_CASE("hazard is increasing and dominates z on [-10, 10]") {
  double prev = hazard(-10.0);
  for (double z = -10.0 + 0.01; z <= 10.0; z += 0.01) {
    const double h = hazard(z);
    CHECK(h > prev);
    CHECK(h > z);
    prev = h;
  }
}

TEST_CASE("hazard fixed point lambda(z) = 2z") {
  const double z0 = oracle::hazard_fixed_point();
  CHECK(z0 == doctest::Approx(0.6120031809624809).epsilon(1e-12));
  CHECK(hazard(z0) == doctest::Approx(2 * z0).epsilon(1e-13));
  // Linearisation coefficient 1/(2 - lambda'(z0)), the 0.8 of the sizing rule.
  CHECK(1.0 / (2.0 - hazard_derivative(z0)) == doctest::Approx(0.7994217219996703).epsilon(1e-10));
}

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_quantile(0.9) == doctest::Approx(1.2815515655446004).epsilon(1e-13));
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
}

TEST_CASE("sample_returns examples") {
  SUBCASE("degenerate normal") {
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
      const auto r = sample_returns(ReturnModel::normal(0.0), 5, seed);
      CHECK(r == std::vector<double>(5, 0.0));
    }
  }
  SUBCASE("law of large numbers") {
    const auto r = sample_returns(ReturnModel::normal(0.01), 1'000'000, 1);
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
    double ss = 0;
    for (double v : r) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / r.size());
    CHECK(std::abs(mean) < 5e-5);
    CHECK(std::abs(sd - 0.01) < 0.01 * 0.01);
  }
  SUBCASE("two-point mixture support") {
    const auto m = ReturnModel::mixture({{0.5, -0.02, 0.0}, {0.5, 0.02, 0.0}});
    for (double v : sample_returns(m, 4, 7)) CHECK((v == -0.02 || v == 0.02));
  }
  SUBCASE("empirical draws come from the sample set") {
    const auto m = ReturnModel::empirical({-0.01, 0.0, 0.01});
    for (double v : sample_returns(m, 100, 3)) CHECK((v == -0.01 || v == 0.0 || v == 0.01));
  }
}

TEST_CASE("sample_returns is reproducible and respects the floor") {
  const auto m = ReturnModel::normal(0.8);
  const auto a = sample_returns(m, 10000, 42);
  const auto b = sample_returns(m, 10000, 42);
  CHECK(a == b);
  CHECK(a != sample_returns(m, 10000, 43));
  for (double v : a) CHECK(v >= -1.0);
  CHECK(*std::min_element(a.begin(), a.end()) == -1.0);
}

TEST_CASE("return model validation") {
  CHECK_THROWS_AS(sample_returns(ReturnModel::normal(-0.1), 3, 1), ConfigError);
  CHECK_THROWS_AS(sample_returns(ReturnModel::empirical({}), 3, 1), ConfigError);
  CHECK_THROWS_AS(ReturnModel::empirical({0.1, 0.2}).validate(), ConfigError);
  CHECK_THROWS_AS(ReturnModel::mixture({{0.5, 0.1, 0.0}, {0.5, 0.0, 0.0}}).validate(), ConfigError);
  CHECK_THROWS_AS(ReturnModel::mixture({{0.3, 0.1, 0.0}, {0.3, -0.1, 0.0}}).validate(), ConfigError);
}

TEST_CASE("scaling and negation") {
  const auto m = ReturnModel::mixture({{0.25, -0.03, 0.01}, {0.75, 0.01, 0.0}});
  CHECK(m.scaled(2.0).stddev() == doctest::Approx(2 * m.stddev()));
  CHECK(m.negated().stddev() == doctest::Approx(m.stddev()));
  CHECK(m.negated().components[0].mean == doctest::Approx(0.03));
}
