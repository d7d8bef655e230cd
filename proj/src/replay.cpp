#include "freeopt/replay.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "freeopt/csv.hpp"
#include "freeopt/errors.hpp"

namespace freeopt {

namespace {

// Beacon-chain genesis; simulated slots are stamped as if on mainnet.
constexpr std::int64_t kGenesisMs = 1'606'824'023'000;
constexpr std::uint64_t kSimBlockOffset = 20'000'000;
constexpr const char* kSimToken = "TKN";
constexpr std::size_t kLowSampleBlocks = 30;

const std::vector<std::string> kBlockColumns{"slot", "block_number", "builder_id", "timestamp_ms", "total_value_eth"};
const std::vector<std::string> kTradeColumns{"trade_id",    "block_number", "searcher_id",  "token_buy",
                                             "amount_buy",  "token_sell",   "amount_sell",  "tip_eth",
                                             "transfer_eth", "base_fee_eth"};
const std::vector<std::string> kQuoteColumns{"token", "timestamp_ms", "mid_price_eth"};

template <class Int>
Int parse_int(const std::string& s, const char* what) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DomainError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

// Column positions for the expected header, in schema order.
std::vector<std::size_t> locate(const CsvTable& t, const std::vector<std::string>& columns) {
  std::vector<std::size_t> idx;
  for (const auto& c : columns) {
    const std::size_t i = t.column(c);
    if (i == std::string::npos) throw DataError(t.source, 1, "missing column '" + c + "'");
    idx.push_back(i);
  }
  return idx;
}

std::int64_t horizon_ms(const BlockRecord& b, double seconds) {
  return b.timestamp_ms + static_cast<std::int64_t>(std::llround(seconds * 1000.0));
}

std::optional<double> price_of(const std::string& token, const Dataset& data, std::int64_t t_ms,
                               const ReplayConfig& config) {
  if (is_eth(token)) return 1.0;
  const auto it = data.quotes.find(token);
  if (it == data.quotes.end()) return std::nullopt;
  return it->second.lookup(t_ms, config.staleness_ms);
}

void load_blocks(Dataset& d, const CsvTable& t) {
  const auto c = locate(t, kBlockColumns);
  std::set<std::uint64_t> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ++d.block_rows;
    const auto& row = t.rows[r];
    try {
      if (row.size() != t.header.size()) throw DomainError("expected " + std::to_string(t.header.size()) + " fields");
      BlockRecord b;
      b.slot = parse_int<std::uint64_t>(row[c[0]], "slot");
      b.block_number = parse_int<std::uint64_t>(row[c[1]], "block_number");
      b.builder_id = row[c[2]];
      b.timestamp_ms = parse_int<std::int64_t>(row[c[3]], "timestamp_ms");
      b.total_value = Amount::parse(row[c[4]]);
      if (b.total_value < Amount{}) throw DomainError("total_value_eth must be non-negative");
      if (!seen.insert(b.block_number).second) throw DomainError("duplicate block_number");
      d.blocks.push_back(std::move(b));
    } catch (const DomainError& e) {
      ++d.rejected_blocks;
      d.diagnostics.push_back({t.source, t.line_numbers[r], e.what()});
    }
  }
  std::stable_sort(d.blocks.begin(), d.blocks.end(), [](const auto& a, const auto& b) { return a.slot < b.slot; });
}

void load_trades(Dataset& d, const CsvTable& t) {
  const auto c = locate(t, kTradeColumns);
  std::unordered_map<std::uint64_t, std::size_t> by_number;
  for (std::size_t i = 0; i < d.blocks.size(); ++i) by_number[d.blocks[i].block_number] = i;
  const Amount zero;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::optional<std::uint64_t> block_number;
    try {
      if (row.size() != t.header.size()) throw DomainError("expected " + std::to_string(t.header.size()) + " fields");
      block_number = parse_int<std::uint64_t>(row[c[1]], "block_number");
      TradeRecord tr;
      tr.trade_id = row[c[0]];
      tr.block_number = *block_number;
      tr.searcher_id = row[c[2]];
      tr.token_buy = row[c[3]];
      tr.amount_buy = Amount::parse(row[c[4]]);
      tr.token_sell = row[c[5]];
      tr.amount_sell = Amount::parse(row[c[6]]);
      tr.tip = Amount::parse(row[c[7]]);
      tr.transfer = Amount::parse(row[c[8]]);
      tr.base_fee = Amount::parse(row[c[9]]);
      if (!(tr.amount_buy > zero && tr.amount_sell > zero)) throw DomainError("amounts must be positive");
      if (tr.token_buy == tr.token_sell || (is_eth(tr.token_buy) && is_eth(tr.token_sell)))
        throw DomainError("tokens must be distinct");
      if (tr.tip < zero || tr.transfer < zero || tr.base_fee < zero) throw DomainError("fees must be non-negative");
      const auto it = by_number.find(tr.block_number);
      if (it == by_number.end()) throw DomainError("trade for unknown block " + std::to_string(tr.block_number));
      BlockRecord& b = d.blocks[it->second];
      b.trades.push_back(d.trades.size());
      b.payments += tr.payment();
      d.trades.push_back(std::move(tr));
    } catch (const DomainError& e) {
      ++d.rejected_trades;
      d.diagnostics.push_back({t.source, t.line_numbers[r], e.what()});
      if (block_number) {
        const auto it = by_number.find(*block_number);
        if (it != by_number.end()) d.blocks[it->second].has_bad_trade = true;
      }
    }
  }
}

void load_quotes(Dataset& d, const CsvTable& t) {
  const auto c = locate(t, kQuoteColumns);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      if (row.size() != t.header.size()) throw DomainError("expected " + std::to_string(t.header.size()) + " fields");
      const std::string& token = row[c[0]];
      const auto ts = parse_int<std::int64_t>(row[c[1]], "timestamp_ms");
      const Amount price = Amount::parse(row[c[2]]);
      if (!(price > Amount{})) throw DomainError("price must be positive");
      QuoteSeries& q = d.quotes[token];
      q.token = token;
      if (!q.timestamps_ms.empty() && ts <= q.timestamps_ms.back())
        throw DomainError("timestamps for " + token + " must be strictly increasing");
      q.timestamps_ms.push_back(ts);
      q.prices.push_back(price);
    } catch (const DomainError& e) {
      ++d.rejected_quotes;
      d.diagnostics.push_back({t.source, t.line_numbers[r], e.what()});
    }
  }
}

}  // namespace

bool is_eth(const std::string& token) { return token == "ETH" || token == "WETH"; }

std::optional<double> QuoteSeries::lookup(std::int64_t t_ms, std::int64_t staleness_ms) const {
  const auto it = std::upper_bound(timestamps_ms.begin(), timestamps_ms.end(), t_ms);
  if (it == timestamps_ms.begin()) return std::nullopt;
  const auto i = static_cast<std::size_t>(std::prev(it) - timestamps_ms.begin());
  if (t_ms - timestamps_ms[i] > staleness_ms) return std::nullopt;
  return prices[i].to_double();
}

Dataset read_dataset(const std::filesystem::path& dir) {
  return read_dataset(dir / "blocks.csv", dir / "trades.csv", dir / "quotes.csv");
}

Dataset read_dataset(const std::filesystem::path& blocks, const std::filesystem::path& trades,
                     const std::filesystem::path& quotes) {
  Dataset d;
  load_blocks(d, read_csv(blocks));
  load_trades(d, read_csv(trades));
  load_quotes(d, read_csv(quotes));
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CsvWriter blocks(dir / "blocks.csv", kBlockColumns);
  for (const auto& b : data.blocks)
    blocks.row({std::to_string(b.slot), std::to_string(b.block_number), b.builder_id, std::to_string(b.timestamp_ms),
                b.total_value.to_string()});
  CsvWriter trades(dir / "trades.csv", kTradeColumns);
  for (const auto& t : data.trades)
    trades.row({t.trade_id, std::to_string(t.block_number), t.searcher_id, t.token_buy, t.amount_buy.to_string(),
                t.token_sell, t.amount_sell.to_string(), t.tip.to_string(), t.transfer.to_string(),
                t.base_fee.to_string()});
  CsvWriter quotes(dir / "quotes.csv", kQuoteColumns);
  for (const auto& [token, q] : data.quotes)
    for (std::size_t i = 0; i < q.timestamps_ms.size(); ++i)
      quotes.row({token, std::to_string(q.timestamps_ms[i]), q.prices[i].to_string()});
}

Dataset dataset_from_simulation(const ScenarioConfig& config, const std::vector<SlotMarket>& market,
                                const std::vector<SlotOutcome>& outcomes, double window) {
  if (market.size() != outcomes.size()) throw DomainError("market and outcomes differ in length");
  const auto slot_ms = static_cast<std::int64_t>(std::llround(config.slot_seconds * 1000.0));
  const auto window_ms = static_cast<std::int64_t>(std::llround(window * 1000.0));
  const std::int64_t grid_end_ms = std::max<std::int64_t>(8000, window_ms);

  Dataset d;
  QuoteSeries& q = d.quotes[kSimToken];
  q.token = kSimToken;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const SlotOutcome& o = outcomes[i];
    const std::uint64_t slot = static_cast<std::uint64_t>(o.slot_index) + 1;
    const std::int64_t t0 = kGenesisMs + static_cast<std::int64_t>(slot) * slot_ms;

    std::set<std::int64_t> offsets{window_ms};
    for (std::int64_t ms = 0; ms <= grid_end_ms; ms += 500) offsets.insert(ms);
    for (std::int64_t ms : offsets) {
      q.timestamps_ms.push_back(t0 + ms);
      q.prices.push_back(Amount::from_double(quote_price(config, market[i], static_cast<double>(ms) / 1000.0)));
    }
    if (o.forced_empty) continue;

    ++d.block_rows;
    BlockRecord b;
    b.slot = slot;
    b.block_number = kSimBlockOffset + slot;
    b.builder_id = "sim";
    b.timestamp_ms = t0;
    b.total_value = o.amounts.block_value;
    if (o.amounts.units > Amount{}) {
      TradeRecord t;
      t.trade_id = "sim-" + std::to_string(slot);
      t.block_number = b.block_number;
      t.searcher_id = "sim";
      t.token_buy = kSimToken;
      t.amount_buy = o.amounts.units;
      t.token_sell = "WETH";
      t.amount_sell = o.amounts.paid;
      t.tip = o.amounts.payment;
      b.trades.push_back(d.trades.size());
      b.payments += t.payment();
      d.trades.push_back(std::move(t));
    }
    d.blocks.push_back(std::move(b));
  }
  return d;
}

void ReplayConfig::validate() const {
  if (!(taker_fee_rate >= 0.0 && taker_fee_rate < 1.0)) throw ConfigError("taker_fee_rate", "must lie in [0, 1)");
  if (staleness_ms < 0) throw ConfigError("staleness_ms", "must be non-negative");
  if (!(grid_step_seconds > 0.0)) throw ConfigError("grid_step_seconds", "must be positive");
  if (!(grid_end_seconds >= 0.0)) throw ConfigError("grid_end_seconds", "must be non-negative");
  if (!(trailing_fraction >= 0.0 && trailing_fraction <= 1.0)) throw ConfigError("trailing_fraction", "must lie in [0, 1]");
  if (bucket_ms <= 0) throw ConfigError("bucket_ms", "must be positive");
}

std::optional<double> markout(const TradeRecord& trade, const Dataset& data, std::int64_t t_ms,
                              const ReplayConfig& config) {
  const auto pa = price_of(trade.token_buy, data, t_ms, config);
  const auto pb = price_of(trade.token_sell, data, t_ms, config);
  if (!pa || !pb) return std::nullopt;
  return markout_value(trade.amount_buy.to_double(), *pa, trade.amount_sell.to_double(), *pb,
                       trade.base_fee.to_double(), config.taker_fee_rate);
}

std::optional<double> block_value_at(const BlockRecord& block, const Dataset& data, double seconds,
                                     const ReplayConfig& config, double carried) {
  if (block.has_bad_trade) return std::nullopt;  // a trade is missing; v_b cannot be split
  std::vector<double> marks;
  marks.reserve(block.trades.size());
  const std::int64_t t_ms = horizon_ms(block, seconds);
  for (std::size_t i : block.trades) {
    const auto m = markout(data.trades[i], data, t_ms, config);
    if (!m) return std::nullopt;
    marks.push_back(*m);
  }
  return block_value(block.non_position_value(), marks, carried);
}

std::optional<double> BlockValuePath::at(double seconds) const {
  for (std::size_t k = 0; k < grid_seconds.size(); ++k)
    if (std::abs(grid_seconds[k] - seconds) < 1e-9) {
      if (std::isnan(values[k])) return std::nullopt;
      return values[k];
    }
  return std::nullopt;
}

BlockValuePath block_value_path(const BlockRecord& block, const Dataset& data, const ReplayConfig& config) {
  BlockValuePath p;
  p.block_number = block.block_number;
  p.slot = block.slot;
  p.partial = block.has_bad_trade;
  const auto n = static_cast<std::size_t>(std::floor(config.grid_end_seconds / config.grid_step_seconds + 1e-9)) + 1;
  std::set<std::string> flagged;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * config.grid_step_seconds;
    p.grid_seconds.push_back(t);
    std::vector<double> marks;
    bool ok = !block.has_bad_trade;
    for (std::size_t i : block.trades) {
      const auto m = markout(data.trades[i], data, horizon_ms(block, t), config);
      if (!m) {
        ok = false;
        flagged.insert(data.trades[i].trade_id);
      } else {
        marks.push_back(*m);
      }
    }
    const double v = ok ? block_value(block.non_position_value(), marks, 0.0) : std::numeric_limits<double>::quiet_NaN();
    p.values.push_back(v);
    p.option_values.push_back(ok ? std::max(0.0, -v) : std::numeric_limits<double>::quiet_NaN());
  }
  p.flagged_trades.assign(flagged.begin(), flagged.end());
  if (!flagged.empty()) p.partial = true;
  p.commit_divergence = p.values.front() - block.total_value.to_double();
  return p;
}

PathSet compute_paths(const Dataset& data, const ReplayConfig& config, unsigned jobs) {
  config.validate();
  PathSet s;
  s.paths.resize(data.blocks.size());
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(data.blocks.size())));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) s.paths[i] = block_value_path(data.blocks[i], data, config);
  };
  if (n_threads <= 1) {
    work(0, data.blocks.size());
  } else {
    std::vector<std::jthread> threads;
    const std::size_t chunk = (data.blocks.size() + n_threads - 1) / n_threads;
    for (unsigned k = 0; k < n_threads; ++k) {
      const std::size_t b = k * chunk, e = std::min(data.blocks.size(), b + chunk);
      if (b < e) threads.emplace_back(work, b, e);
    }
  }
  s.ingested = data.block_rows;
  s.rejected = data.rejected_blocks;
  for (const auto& p : s.paths) (p.partial ? s.partial : s.complete)++;
  return s;
}

MitigationReport mitigation_counterfactual(const Dataset& data, const PathSet& paths,
                                           const std::vector<double>& windows, const std::vector<double>& penalties,
                                           bool trailing, const ReplayConfig& config, bool keep_decisions) {
  config.validate();
  if (paths.paths.size() != data.blocks.size()) throw DomainError("paths do not match the dataset");
  MitigationReport report;
  for (double w : windows) {
    if (!(w >= 0.0)) throw ConfigError("windows", "must be non-negative");
    for (double p : penalties) {
      if (!(p >= 0.0)) throw ConfigError("penalties", "must be non-negative");
      MitigationCell cell;
      cell.window = w;
      cell.penalty = p;
      std::map<std::int64_t, DailyCell> daily;
      const BlockRecord* prev = nullptr;
      bool prev_exercised = false;
      double prev_carry = 0.0;
      for (std::size_t i = 0; i < data.blocks.size(); ++i) {
        const BlockRecord& b = data.blocks[i];
        const bool usable = !paths.paths[i].partial || config.include_partial;
        double carried = 0.0;
        if (trailing && prev && prev_exercised && prev->slot + 1 == b.slot)
          carried = config.trailing_fraction * (prev->non_position_value().to_double() + prev_carry);
        std::optional<double> v;
        if (usable) v = block_value_at(b, data, w, config, carried);
        prev = &b;
        prev_exercised = false;
        prev_carry = 0.0;
        if (!v) continue;
        BlockDecision dec{b.block_number, b.slot, carried, *v, *v < -p, 0.0};
        if (dec.exercised) dec.option_value = std::max(0.0, -*v);
        prev_exercised = dec.exercised;
        prev_carry = carried;
        ++cell.blocks;
        DailyCell& day = daily[b.timestamp_ms / config.bucket_ms];
        day.bucket = b.timestamp_ms / config.bucket_ms;
        day.window = w;
        day.penalty = p;
        ++day.blocks;
        if (dec.exercised) {
          ++cell.exercises;
          cell.option_value += dec.option_value;
          ++day.exercises;
          day.option_value += dec.option_value;
        }
        if (keep_decisions) cell.decisions.push_back(dec);
      }
      cell.exercise_prob = cell.blocks ? static_cast<double>(cell.exercises) / static_cast<double>(cell.blocks) : 0.0;
      for (auto& [key, day] : daily) {
        day.exercise_prob = static_cast<double>(day.exercises) / static_cast<double>(day.blocks);
        report.daily.push_back(day);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

ReplayEnvironment::ReplayEnvironment(const Dataset& data, const PathSet& paths, double window, bool trailing,
                                     const ReplayConfig& config)
    : trailing_(trailing), fraction_(config.trailing_fraction) {
  config.validate();
  if (paths.paths.size() != data.blocks.size()) throw DomainError("paths do not match the dataset");
  if (!(window >= 0.0)) throw ConfigError("window", "must be non-negative");
  for (std::size_t i = 0; i < data.blocks.size(); ++i) {
    const BlockRecord& b = data.blocks[i];
    if (paths.paths[i].partial && !config.include_partial) continue;
    const auto v = block_value_at(b, data, window, config, 0.0);
    if (v) rounds_.push_back({b.slot, *v, b.non_position_value().to_double()});
  }
}

int ReplayEnvironment::outcome(std::uint64_t t, double p, double) {
  if (t != next_ || t > rounds_.size()) throw DomainError("replay rounds must be played in order");
  const Round& r = rounds_[t - 1];
  double carried = 0.0;
  if (trailing_ && t > 1 && prev_exercised_ && rounds_[t - 2].slot + 1 == r.slot)
    carried = fraction_ * (rounds_[t - 2].non_position + prev_carry_);
  const bool exercised = r.value + carried < -p;
  prev_exercised_ = exercised;
  prev_carry_ = carried;
  ++next_;
  return exercised ? 1 : 0;
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DomainError("pearson: length mismatch");
  Correlation c;
  c.n = x.size();
  if (c.n < 3) return c;
  const double n = static_cast<double>(c.n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.p_value = 0.0;
    return c;
  }
  const double df = n - 2.0;
  const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
  const boost::math::students_t dist(df);
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

HeterogeneityReport heterogeneity_report(const Dataset& data, const PathSet& paths, double window, double penalty,
                                         const ReplayConfig& config) {
  const auto mit = mitigation_counterfactual(data, paths, {window}, {penalty}, false, config, true);
  std::unordered_map<std::uint64_t, bool> exercised;
  for (const auto& d : mit.cells.front().decisions) exercised[d.block_number] = d.exercised;

  struct Acc {
    std::size_t blocks = 0, share_blocks = 0, exercises = 0;
    double share_sum = 0.0;
  };
  std::map<std::string, Acc> by_builder;
  std::map<std::int64_t, Acc> by_day;
  std::size_t total = 0;
  for (const auto& b : data.blocks) {
    const auto it = exercised.find(b.block_number);
    if (it == exercised.end()) continue;  // excluded block
    ++total;
    const double vb = b.total_value.to_double();
    for (Acc* a : {&by_builder[b.builder_id], &by_day[b.timestamp_ms / config.bucket_ms]}) {
      ++a->blocks;
      a->exercises += it->second;
      if (vb > 0.0) {
        ++a->share_blocks;
        a->share_sum += b.payments.to_double() / vb;
      }
    }
  }
  HeterogeneityReport rep;
  for (const auto& [id, a] : by_builder) {
    BuilderRow row;
    row.builder_id = id;
    row.blocks = a.blocks;
    row.market_share = static_cast<double>(a.blocks) / static_cast<double>(total);
    row.mean_cexdex_share = a.share_blocks ? a.share_sum / static_cast<double>(a.share_blocks) : 0.0;
    row.exercises = a.exercises;
    row.exercise_prob = static_cast<double>(a.exercises) / static_cast<double>(a.blocks);
    row.low_sample = a.blocks < kLowSampleBlocks;
    rep.builders.push_back(row);
  }
  std::stable_sort(rep.builders.begin(), rep.builders.end(),
                   [](const auto& a, const auto& b) { return a.blocks > b.blocks; });
  for (const auto& [day, a] : by_day) {
    rep.daily_buckets.push_back(day);
    rep.daily_cexdex_share.push_back(a.share_blocks ? a.share_sum / static_cast<double>(a.share_blocks) : 0.0);
    rep.daily_exercise_prob.push_back(static_cast<double>(a.exercises) / static_cast<double>(a.blocks));
  }
  rep.daily_correlation = pearson(rep.daily_cexdex_share, rep.daily_exercise_prob);
  return rep;
}

std::vector<VolatilityRow> volatility_metric(const QuoteSeries& quotes, std::int64_t bucket_ms) {
  if (bucket_ms <= 0) throw ConfigError("bucket_ms", "must be positive");
  std::map<std::int64_t, std::pair<double, double>> range;
  std::map<std::int64_t, std::size_t> counts;
  for (std::size_t i = 0; i < quotes.timestamps_ms.size(); ++i) {
    const std::int64_t ts = quotes.timestamps_ms[i];
    const std::int64_t key = ts >= 0 ? ts / bucket_ms : -((-ts + bucket_ms - 1) / bucket_ms);
    const double p = quotes.prices[i].to_double();
    auto [it, fresh] = range.try_emplace(key, p, p);
    if (!fresh) {
      it->second.first = std::min(it->second.first, p);
      it->second.second = std::max(it->second.second, p);
    }
    ++counts[key];
  }
  std::vector<VolatilityRow> out;
  for (const auto& [key, lohi] : range) out.push_back({key, counts[key], std::log10(lohi.second / lohi.first)});
  return out;
}

}  // namespace freeopt
