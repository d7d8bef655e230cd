#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "freeopt/errors.hpp"
#include "freeopt/replay.hpp"
#include "oracles.hpp"

using namespace freeopt;
namespace fs = std::filesystem;

namespace {

const fs::path kCaseStudy = fs::path(FREEOPT_FIXTURES) / "case_study";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freeopt_test_replay_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kBlockHeader = "slot,block_number,builder_id,timestamp_ms,total_value_eth\n";
const std::string kTradeHeader =
    "trade_id,block_number,searcher_id,token_buy,amount_buy,token_sell,amount_sell,tip_eth,transfer_eth,base_fee_eth\n";
const std::string kQuoteHeader = "token,timestamp_ms,mid_price_eth\n";

// Quotes for `token` every 500 ms over [t0 - 1 s, t0 + 9 s] at a constant price.
std::string flat_quotes(const std::string& token, std::int64_t t0, const std::string& price) {
  std::string s;
  for (int k = -2; k <= 18; ++k) s += token + "," + std::to_string(t0 + 500 * k) + "," + price + "\n";
  return s;
}

TradeRecord trade(const std::string& buy, const std::string& x, const std::string& sell, const std::string& y,
                  const std::string& base) {
  TradeRecord t;
  t.trade_id = "t";
  t.token_buy = buy;
  t.amount_buy = Amount::parse(x);
  t.token_sell = sell;
  t.amount_sell = Amount::parse(y);
  t.base_fee = Amount::parse(base);
  return t;
}

}  // namespace

TEST_CASE("Amount parsing and formatting") {
  CHECK(Amount::parse("0.0659").raw() == 65'900'000'000'000'000);
  CHECK(Amount::parse("-3").to_string() == "-3");
  CHECK(Amount::parse("12.000000000000000001").to_string() == "12.000000000000000001");
  CHECK(Amount::parse(".5").to_string() == "0.5");
  CHECK(Amount::parse("161876.631281").to_double() == 161876.631281);
  CHECK_THROWS_AS(Amount::parse("0.0000000000000000001"), DomainError);
  CHECK_THROWS_AS(Amount::parse("1e-3"), DomainError);
  CHECK_THROWS_AS(Amount::parse(""), DomainError);
  CHECK_THROWS_AS(Amount::parse("1.2.3"), DomainError);
  const Amount a = Amount::parse("0.1") + Amount::parse("0.2");
  CHECK(a == Amount::parse("0.3"));
  CHECK(Amount::from_double(0.1).to_double() == 0.1);
  CHECK(Amount::from_double(-2.5).to_string() == "-2.5");
  CHECK_THROWS_AS(Amount::from_double(std::nan("")), DomainError);
}

TEST_CASE("markout examples") {
  Dataset d;
  d.quotes["USDC"] = {"USDC", {0}, {Amount::parse("0.00049")}};
  ReplayConfig c;
  c.taker_fee_rate = 0.0;
  CHECK(*markout(trade("WETH", "1", "USDC", "2000", "0.001"), d, 100, c) == doctest::Approx(0.019).epsilon(1e-13));
  // Flat position, no fees.
  CHECK(*markout(trade("WETH", "0.98", "USDC", "2000", "0"), d, 100, c) == doctest::Approx(0.0).scale(1.0));
  // Taker fee on both legs.
  c.taker_fee_rate = 0.0001725;
  CHECK(*markout(trade("WETH", "1", "USDC", "2000", "0.001"), d, 100, c) ==
        doctest::Approx(0.019 - 0.0001725 * 1.98).epsilon(1e-13));
  // No quote for the token: flagged, never a silent zero.
  CHECK_FALSE(markout(trade("WETH", "1", "DAI", "2000", "0"), d, 100, c).has_value());
}

TEST_CASE("quote lookup carries the last observation forward up to the staleness cap") {
  QuoteSeries q{"X", {1000, 2000, 5000}, {Amount::parse("1"), Amount::parse("2"), Amount::parse("5")}};
  CHECK_FALSE(q.lookup(999, 2000).has_value());
  CHECK(*q.lookup(1000, 2000) == 1.0);
  CHECK(*q.lookup(1999, 2000) == 1.0);
  CHECK(*q.lookup(4000, 2000) == 2.0);
  CHECK_FALSE(q.lookup(4001, 2000).has_value());
  CHECK(*q.lookup(9000, 10000) == 5.0);
}

TEST_CASE("case-study fixture") {
  const Dataset d = read_dataset(kCaseStudy);
  REQUIRE(d.blocks.size() == 1);
  REQUIRE(d.diagnostics.empty());
  const BlockRecord& b = d.blocks[0];
  CHECK(b.total_value == Amount::parse("0.0659"));
  CHECK(b.payments == Amount::parse("0.0311"));
  const BlockValuePath p = block_value_path(b, d, ReplayConfig{});
  CHECK_FALSE(p.partial);
  CHECK(p.grid_seconds.size() == 17);
  CHECK(std::abs(*p.at(0.0) - 0.0581) <= 0.001);
  CHECK(std::abs(p.option_values.back() - 0.064) <= 0.001);
  CHECK(p.commit_divergence == doctest::Approx(0.0581 - 0.0659).epsilon(0.02));
  // Profitable at commitment, under water from about 3.5 s on.
  CHECK(*p.at(3.0) > 0.0);
  CHECK(*p.at(4.0) < 0.0);
  for (std::size_t k = 1; k < p.values.size(); ++k) CHECK(p.values[k] <= p.values[k - 1]);
}

TEST_CASE("block without trades keeps its value; offsetting trades are an identity") {
  const fs::path dir = scratch("identity");
  const std::int64_t t0 = 1'700'000'000'000;
  write(dir / "blocks.csv", kBlockHeader + "1,10,b," + std::to_string(t0) + ",0.5\n2,11,b," + std::to_string(t0 + 12000) + ",0.7\n");
  // Block 11: buys 1 WETH for 2000 USDC at 0.0004 ETH/USDC, markout 0.2, paid 0.2 to the builder.
  write(dir / "trades.csv", kTradeHeader + "x,11,s,WETH,1,USDC,2000,0.15,0.05,0\n");
  write(dir / "quotes.csv", kQuoteHeader + flat_quotes("USDC", t0 + 12000, "0.0004"));
  const Dataset d = read_dataset(dir);
  ReplayConfig c;
  c.taker_fee_rate = 0.0;
  const auto paths = compute_paths(d, c);
  for (double v : paths.paths[0].values) CHECK(v == 0.5);
  for (double v : paths.paths[0].option_values) CHECK(v == 0.0);
  for (double v : paths.paths[1].values) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("missing coverage marks blocks partial and the accounting balances") {
  const fs::path dir = scratch("partial");
  const std::int64_t t0 = 1'700'000'000'000;
  std::string blocks = kBlockHeader;
  for (int k = 0; k < 4; ++k)
    blocks += std::to_string(100 + k) + "," + std::to_string(500 + k) + ",b," + std::to_string(t0 + 12000 * k) + ",0.1\n";
  blocks += "104,504,b,notatime,0.1\n";      // rejected
  blocks += "105,505,b,1,-0.1\n";            // rejected: negative value
  write(dir / "blocks.csv", blocks);
  write(dir / "trades.csv", kTradeHeader +
                                "a,501,s,WETH,1,USDC,2000,0.01,0,0\n"      // quotes stop early: partial
                                "b,502,s,WETH,1,DAI,2000,0.01,0,0\n"       // no DAI quotes: partial
                                "c,503,s,WETH,0,USDC,2000,0.01,0,0\n"      // rejected row: block partial
                                "d,999,s,WETH,1,USDC,2000,0.01,0,0\n");    // unknown block
  std::string quotes = kQuoteHeader;
  for (int k = 0; k <= 6; ++k) quotes += "USDC," + std::to_string(t0 + 12000 + 500 * k) + ",0.0004\n";
  quotes += "USDC," + std::to_string(t0) + ",0.0004\n";  // out of order: rejected
  write(dir / "quotes.csv", quotes);

  const Dataset d = read_dataset(dir);
  CHECK(d.block_rows == 6);
  CHECK(d.rejected_blocks == 2);
  CHECK(d.rejected_trades == 2);
  CHECK(d.rejected_quotes == 1);
  REQUIRE(d.diagnostics.size() == 5);
  CHECK(d.diagnostics[0].file == "blocks.csv");
  CHECK(d.diagnostics[0].line == 6);
  CHECK(d.diagnostics[2].line == 4);
  const auto s = compute_paths(d, ReplayConfig{});
  CHECK(s.ingested == s.complete + s.partial + s.rejected);
  CHECK(s.complete == 1);
  CHECK(s.partial == 3);
  CHECK(s.paths[1].flagged_trades == std::vector<std::string>{"a"});
  CHECK(std::isnan(s.paths[1].values.back()));
  CHECK(s.paths[1].at(2.0).has_value());
  // Partial blocks are left out of the counterfactual by default.
  const auto m = mitigation_counterfactual(d, s, {2.0}, {0.0}, false, ReplayConfig{});
  CHECK(m.cells[0].blocks == 1);
  ReplayConfig with_partial;
  with_partial.include_partial = true;
  CHECK(mitigation_counterfactual(d, s, {2.0}, {0.0}, false, with_partial).cells[0].blocks == 2);
}

TEST_CASE("missing files and columns throw") {
  const fs::path dir = scratch("broken");
  CHECK_THROWS_AS(read_dataset(dir), IoError);
  write(dir / "blocks.csv", "slot,block_number\n1,2\n");
  write(dir / "trades.csv", kTradeHeader);
  write(dir / "quotes.csv", kQuoteHeader);
  CHECK_THROWS_AS(read_dataset(dir), DataError);
}

TEST_CASE("mitigation counterfactual: penalties and trailing value") {
  const fs::path dir = scratch("mitigation");
  const std::int64_t t0 = 1'700'000'000'000;
  std::string blocks = kBlockHeader, trades = kTradeHeader, quotes = kQuoteHeader;
  // Three consecutive slots and one after a gap; every trade loses 0.35 ETH at
  // t >= 1 s against a non-position value of 0.15.
  const int slots[] = {1, 2, 3, 5};
  for (int k = 0; k < 4; ++k) {
    const std::int64_t ts = t0 + 12000 * slots[k];
    blocks += std::to_string(slots[k]) + "," + std::to_string(900 + k) + ",b," + std::to_string(ts) + ",0.15\n";
    trades += "t" + std::to_string(k) + "," + std::to_string(900 + k) + ",s,WETH,1,USDC,1000,0,0,0\n";
    quotes += "USDC," + std::to_string(ts) + ",0.001\n";
    for (int j = 2; j <= 18; ++j) quotes += "USDC," + std::to_string(ts + 500 * j) + ",0.00135\n";
  }
  write(dir / "blocks.csv", blocks);
  write(dir / "trades.csv", trades);
  write(dir / "quotes.csv", quotes);
  const Dataset d = read_dataset(dir);
  ReplayConfig c;
  c.taker_fee_rate = 0.0;
  const auto paths = compute_paths(d, c);
  // Pi(2 s) = 0.1 - 0.3 = -0.2 in every block.
  CHECK(*paths.paths[0].at(2.0) == doctest::Approx(-0.2));

  const auto plain = mitigation_counterfactual(d, paths, {2.0}, {0.0, 0.25}, false, c, true);
  CHECK(plain.cells[0].exercises == 4);
  CHECK(plain.cells[0].option_value == doctest::Approx(0.8));
  CHECK(plain.cells[1].exercises == 0);  // penalty above every option value

  const auto trail = mitigation_counterfactual(d, paths, {2.0}, {0.0}, true, c, true);
  const auto& dec = trail.cells[0].decisions;
  REQUIRE(dec.size() == 4);
  CHECK(dec[0].exercised);
  CHECK(dec[1].carried == doctest::Approx(0.15));
  CHECK(dec[1].exercised);  // -0.2 + 0.15 < 0
  CHECK(dec[2].carried == doctest::Approx(0.3));  // 0.15 + previous carry
  CHECK_FALSE(dec[2].exercised);
  CHECK(dec[3].carried == 0.0);                   // slot gap
  CHECK(trail.cells[0].exercises == 3);
  c.trailing_fraction = 0.5;
  CHECK(mitigation_counterfactual(d, paths, {2.0}, {0.0}, true, c, true).cells[0].decisions[1].carried ==
        doctest::Approx(0.075));
  // Before any quote moves the position is flat.
  CHECK(mitigation_counterfactual(d, paths, {0.0}, {0.0}, false, c).cells[0].exercises == 0);
}

TEST_CASE("pearson with t-approximation p-value") {
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> y{2.1, 3.9, 6.2, 7.8, 10.1, 12.2, 13.8, 16.1, 18.0, 20.2};
  const auto c = pearson(x, y);
  CHECK(c.r == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-14));
  CHECK(c.p_value < 1e-8);
  // r = 0.7 with n = 10 gives p = 0.024174 (Student t, 8 degrees of freedom).
  std::vector<double> a{0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, b(10);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise;
  for (auto& v : b) v = noise(gen);
  // Mix to hit r = 0.7 exactly: b' = r * za + sqrt(1 - r^2) * zb', with zb' orthogonal to a.
  auto standardize = [](std::vector<double> v) {
    double m = 0, s = 0;
    for (double e : v) m += e;
    m /= v.size();
    for (auto& e : v) e -= m, s += e * e;
    for (auto& e : v) e /= std::sqrt(s);
    return v;
  };
  const auto za = standardize(a);
  auto zb = standardize(b);
  double dot = 0;
  for (std::size_t i = 0; i < 10; ++i) dot += za[i] * zb[i];
  for (std::size_t i = 0; i < 10; ++i) zb[i] -= dot * za[i];
  zb = standardize(zb);
  std::vector<double> mixed(10);
  for (std::size_t i = 0; i < 10; ++i) mixed[i] = 0.7 * za[i] + std::sqrt(1 - 0.49) * zb[i];
  const auto c2 = pearson(a, mixed);
  CHECK(c2.r == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(c2.p_value == doctest::Approx(0.024174).epsilon(1e-4));
  CHECK(pearson({1, 2}, {3, 4}).n == 2);
  CHECK(pearson({1, 1, 1}, {3, 4, 5}).r == 0.0);
}

TEST_CASE("heterogeneity report") {
  const fs::path dir = scratch("hetero");
  const std::int64_t day = 86'400'000, t0 = 1'700'006'400'000 - (1'700'006'400'000 % day);
  std::string blocks = kBlockHeader, trades = kTradeHeader, quotes = kQuoteHeader;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0, 1);
  // 20 days x 200 blocks. On day k the CEX-DEX share is s_k and each block
  // loses money (and is exercised) with probability s_k / 2.
  int slot = 0;
  for (int k = 0; k < 20; ++k) {
    const double share = 0.1 + 0.04 * k;
    for (int j = 0; j < 200; ++j, ++slot) {
      const std::int64_t ts = t0 + k * day + 12000 * j;
      const std::string builder = j % 4 == 0 ? "small" : (j % 2 ? "big" : "mid");
      const std::string tip = std::to_string(share);
      blocks += std::to_string(slot) + "," + std::to_string(slot) + "," + builder + "," + std::to_string(ts) + ",1\n";
      const bool lose = u(gen) < share / 2;
      // Markout equals the tip when flat; a losing block marks the position 3 ETH down.
      trades += "t" + std::to_string(slot) + "," + std::to_string(slot) + ",s,WETH,1000" + tip.substr(1) +
                ",USDC,1000000," + tip + ",0,0\n";
      quotes += "USDC," + std::to_string(ts) + ",0.001\n";
      for (int m = 1; m <= 9; ++m)
        quotes += "USDC," + std::to_string(ts + 1000 * m) + "," + (lose ? "0.001003" : "0.001") + "\n";
    }
  }
  write(dir / "blocks.csv", blocks);
  write(dir / "trades.csv", trades);
  write(dir / "quotes.csv", quotes);
  const Dataset d = read_dataset(dir);
  REQUIRE(d.diagnostics.empty());
  ReplayConfig c;
  c.taker_fee_rate = 0.0;
  const auto paths = compute_paths(d, c);
  const auto rep = heterogeneity_report(d, paths, 2.0, 0.0, c);
  REQUIRE(rep.builders.size() == 3);
  CHECK(rep.builders[0].builder_id == "big");
  CHECK(rep.builders[0].market_share == doctest::Approx(0.5));
  CHECK(rep.builders[0].mean_cexdex_share == doctest::Approx(0.48));
  CHECK(rep.builders[2].market_share == doctest::Approx(0.25));
  CHECK_FALSE(rep.builders[2].low_sample);
  CHECK(rep.daily_exercise_prob.size() == 20);
  CHECK(rep.daily_correlation.r > 0.8);
  CHECK(rep.daily_correlation.p_value < 1e-4);
}

TEST_CASE("heterogeneity: one builder owns the market; identical paths give identical rates") {
  const fs::path dir = scratch("hetero_small");
  const std::int64_t t0 = 1'700'000'000'000;
  std::string blocks = kBlockHeader, trades = kTradeHeader, quotes = kQuoteHeader;
  for (int j = 0; j < 10; ++j) {
    const std::int64_t ts = t0 + 12000 * j;
    blocks += std::to_string(j) + "," + std::to_string(j) + "," + (j % 2 ? "A" : "B") + "," + std::to_string(ts) + ",0.1\n";
    trades += "t" + std::to_string(j) + "," + std::to_string(j) + ",s,WETH,1,USDC,1000,0,0,0\n";
    quotes += "USDC," + std::to_string(ts) + ",0.001\n";
    for (int m = 1; m <= 9; ++m)
      quotes += "USDC," + std::to_string(ts + 1000 * m) + "," + (j / 2 % 2 ? "0.0012" : "0.001") + "\n";
  }
  write(dir / "blocks.csv", blocks);
  write(dir / "trades.csv", trades);
  write(dir / "quotes.csv", quotes);
  const Dataset d = read_dataset(dir);
  ReplayConfig c;
  c.taker_fee_rate = 0.0;
  const auto paths = compute_paths(d, c);
  const auto rep = heterogeneity_report(d, paths, 2.0, 0.0, c);
  REQUIRE(rep.builders.size() == 2);
  CHECK(rep.builders[0].exercise_prob == rep.builders[1].exercise_prob);
  CHECK(rep.builders[0].low_sample);

  Dataset solo = d;
  for (auto& b : solo.blocks) b.builder_id = "solo";
  const auto one = heterogeneity_report(solo, paths, 2.0, 0.0, c);
  REQUIRE(one.builders.size() == 1);
  CHECK(one.builders[0].market_share == 1.0);
}

TEST_CASE("volatility metric") {
  auto series = [](std::vector<std::pair<std::int64_t, std::string>> pts) {
    QuoteSeries q;
    for (auto& [t, p] : pts) q.timestamps_ms.push_back(t), q.prices.push_back(Amount::parse(p));
    return q;
  };
  const auto flat = volatility_metric(series({{0, "3"}, {10, "3"}}), 1000);
  REQUIRE(flat.size() == 1);
  CHECK(flat[0].log10_range == 0.0);
  CHECK(volatility_metric(series({{0, "1"}, {10, "10"}}), 1000)[0].log10_range == doctest::Approx(1.0));
  const auto three = volatility_metric(series({{0, "100"}, {1, "102"}, {2, "99"}, {5000, "1"}}), 1000);
  REQUIRE(three.size() == 2);  // empty buckets between have no row
  CHECK(three[0].log10_range == doctest::Approx(0.012965).epsilon(1e-4));
  CHECK(three[1].bucket == 5);
}

TEST_CASE("simulator round trip through the CSV schema") {
  ScenarioConfig cfg;
  cfg.n_slots = 1500;
  cfg.seed = 77;
  cfg.regimes = {{3e-4, 300.0}, {1e-4, 300.0}};
  const GridCell cell{6.5, 0.05};
  const auto market = market_path(cfg);
  const auto sim = run_scenario(cfg, cell, market);
  const Dataset exported = dataset_from_simulation(cfg, market, sim, cell.window);
  const fs::path dir = scratch("roundtrip");
  write_dataset(exported, dir);
  const Dataset back = read_dataset(dir);
  REQUIRE(back.diagnostics.empty());
  REQUIRE(back.blocks.size() == sim.size());

  ReplayConfig rc;
  rc.taker_fee_rate = 0.0;
  rc.trailing_fraction = cfg.trailing_fraction;
  const auto paths = compute_paths(back, rc);
  CHECK(paths.partial == 0);
  const auto rep = mitigation_counterfactual(back, paths, {cell.window}, {cell.penalty}, true, rc, true);
  const auto& dec = rep.cells[0].decisions;
  REQUIRE(dec.size() == sim.size());
  std::size_t exercised = 0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    CHECK(dec[i].exercised == sim[i].exercised);
    CHECK(dec[i].value == sim[i].pi_at_deadline);
    CHECK(dec[i].option_value == sim[i].option_value_realized);
    exercised += sim[i].exercised;
  }
  CHECK(exercised > 0);
}
