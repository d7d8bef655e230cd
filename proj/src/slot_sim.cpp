#include "freeopt/slot_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>

#include "freeopt/builder_option.hpp"
#include "freeopt/errors.hpp"
#include "freeopt/rng.hpp"

namespace freeopt {

namespace {

// Stream ids under the scenario seed. Grid cells never draw, so every cell
// sees the same market.
constexpr std::uint64_t kRegimeStream = 11;
constexpr std::uint64_t kMuStream = 12;
constexpr std::uint64_t kReturnStream = 13;

constexpr double kMinPrice = 1e-12;

void require(bool ok, const std::string& field, const std::string& detail) {
  if (!ok) throw ConfigError(field, detail);
}

// Windows are carried at millisecond resolution so quote timestamps land on them.
double canonical_window(double window) { return static_cast<double>(std::llround(window * 1000.0)) / 1000.0; }

}  // namespace

void ScenarioConfig::validate() const {
  require(std::isfinite(slot_seconds) && slot_seconds > 0.0, "slot_seconds", "must be positive");
  require(!window_grid.empty(), "window_grid", "must not be empty");
  for (std::size_t i = 0; i < window_grid.size(); ++i) {
    const double w = window_grid[i];
    const std::string field = "window_grid[" + std::to_string(i) + "]";
    require(std::isfinite(w) && w > 0.0 && w < slot_seconds, field, "must lie in (0, slot_seconds)");
    require(std::abs(w * 1000.0 - std::round(w * 1000.0)) < 1e-6, field, "must be a whole number of milliseconds");
  }
  require(!penalty_grid.empty(), "penalty_grid", "must not be empty");
  for (std::size_t i = 0; i < penalty_grid.size(); ++i)
    require(std::isfinite(penalty_grid[i]) && penalty_grid[i] >= 0.0, "penalty_grid[" + std::to_string(i) + "]",
            "must be finite and non-negative");
  require(!regimes.empty(), "regimes", "must not be empty");
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const std::string field = "regimes[" + std::to_string(i) + "]";
    require(std::isfinite(regimes[i].sigma_per_sec) && regimes[i].sigma_per_sec >= 0.0, field + ".sigma_per_sec",
            "must be finite and non-negative");
    require(regimes[i].mean_dwell_slots >= 1.0, field + ".mean_dwell_slots", "must be at least 1");
  }
  if (mu.kind == MuKind::lognormal) {
    require(std::isfinite(mu.mean) && mu.mean > 0.0, "mu.mean", "lognormal mean must be positive");
    require(std::isfinite(mu.log_sd) && mu.log_sd >= 0.0, "mu.log_sd", "must be non-negative");
  } else {
    require(std::isfinite(mu.mean), "mu.mean", "must be finite");
  }
  try {
    pool.validate();
  } catch (const ConfigError& e) {
    throw e.nested_under("pool");
  }
  require(pool.side == TradeSide::buy, "pool.side", "the simulator trades the buy side only");
  require(time_scaling_exponent >= 0.5 && time_scaling_exponent <= 1.0, "time_scaling_exponent",
          "must lie in [0.5, 1]");
  require(trailing_fraction >= 0.0 && trailing_fraction <= 1.0, "trailing_fraction", "must lie in [0, 1]");
  require(baseline_missed_rate >= 0.0 && baseline_missed_rate < 1.0, "baseline_missed_rate", "must lie in [0, 1)");
  require(slots_per_day >= 1, "slots_per_day", "must be at least 1");
  if (cexdex_share_target)
    require(*cexdex_share_target >= 0.0 && *cexdex_share_target <= 1.0, "cexdex_share_target", "must lie in [0, 1]");
}

std::vector<SlotMarket> market_path(const ScenarioConfig& config) {
  config.validate();
  const CounterRng regime_rng(config.seed, kRegimeStream);
  const CounterRng mu_rng(config.seed, kMuStream);
  const CounterRng return_rng(config.seed, kReturnStream);
  const std::size_t k = config.regimes.size();

  std::vector<SlotMarket> path(config.n_slots);
  std::size_t regime = 0;
  for (std::size_t t = 0; t < config.n_slots; ++t) {
    if (t > 0 && k > 1 && regime_rng.uniform(2 * t) < 1.0 / config.regimes[regime].mean_dwell_slots) {
      const auto hop = static_cast<std::size_t>(regime_rng.uniform(2 * t + 1) * static_cast<double>(k - 1));
      regime = (regime + 1 + std::min(hop, k - 2)) % k;
    }
    SlotMarket& m = path[t];
    m.slot = t;
    m.regime = regime;
    m.sigma_per_sec = config.regimes[regime].sigma_per_sec;
    if (config.mu.kind == MuKind::lognormal) {
      const double s = config.mu.log_sd;
      m.mu_drawn = config.mu.mean * std::exp(s * mu_rng.normal(t) - 0.5 * s * s);
    } else {
      m.mu_drawn = config.mu.mean;
    }
    m.z = return_rng.normal(t);
  }
  return path;
}

double quote_price(const ScenarioConfig& config, const SlotMarket& market, double seconds) {
  const double p0 = config.pool.cex_price_P0;
  double r = market.sigma_per_sec * std::pow(seconds, config.time_scaling_exponent) * market.z;
  r = std::max(r, -1.0);
  return quantize(std::max(p0 * (1.0 + r), kMinPrice));
}

SlotOutcome settle_slot(const PoolState& pool, const SlotTerms& terms) {
  SlotOutcome o;
  SettledAmounts& a = o.amounts;
  const Amount mu = Amount::from_double(terms.mu_drawn);
  const Amount recorded = mu + Amount::from_double(terms.rolled_over);
  o.mu_drawn = mu.to_double();
  o.carried = terms.carried;
  o.rolled_over = (recorded - mu).to_double();
  o.mu_effective = recorded.to_double() + o.carried;
  o.forced_empty = terms.forced_empty;

  if (terms.position_y > 0.0 && !terms.forced_empty) {
    const double p0 = pool.cex_price_P0;
    a.units = Amount::from_double(terms.position_y / p0);
    a.paid = Amount::from_double(dex_cost(pool, a.units.to_double()));
    a.deadline_price = Amount::from_double(terms.deadline_price);
    const double at_commit = a.units.to_double() * quantize(p0) - a.paid.to_double();
    a.payment = Amount::from_double(std::max(0.0, at_commit));
    o.y_star = terms.position_y;
  }
  a.non_position = recorded;
  a.block_value = recorded + a.payment;
  o.units_bought = a.units.to_double();
  o.dex_paid = a.paid.to_double();
  o.searcher_payment = a.payment.to_double();
  o.block_value_vb = a.block_value.to_double();
  if (terms.forced_empty) return o;

  double marks[1];
  std::size_t n_marks = 0;
  if (a.units.raw() > 0) {
    marks[n_marks++] = markout_value(a.units.to_double(), a.deadline_price.to_double(), a.paid.to_double(), 1.0, 0.0, 0.0);
    o.realized_return = a.deadline_price.to_double() / quantize(pool.cex_price_P0) - 1.0;
  }
  o.pi_at_deadline = block_value(a.non_position, std::span<const double>(marks, n_marks), terms.carried);
  o.exercised = o.pi_at_deadline < -terms.penalty;
  if (o.exercised) {
    o.option_value_realized = std::max(0.0, -o.pi_at_deadline);
    o.penalty_charged = terms.penalty;
  }
  return o;
}

std::vector<SlotOutcome> run_scenario(const ScenarioConfig& config, GridCell cell) {
  return run_scenario(config, cell, market_path(config));
}

std::vector<SlotOutcome> run_scenario(const ScenarioConfig& config, GridCell cell,
                                      const std::vector<SlotMarket>& market) {
  config.validate();
  require(std::isfinite(cell.window) && cell.window > 0.0 && cell.window < config.slot_seconds, "window",
          "must lie in (0, slot_seconds)");
  require(std::isfinite(cell.penalty) && cell.penalty >= 0.0, "penalty", "must be finite and non-negative");
  const double window = canonical_window(cell.window);
  const std::unordered_set<std::size_t> forced(config.forced_empty_slots.begin(), config.forced_empty_slots.end());

  BuilderProblem bp;
  bp.pool = config.pool;
  bp.window_tau = window;
  bp.penalty_p = cell.penalty;
  bp.time_scaling_exponent = config.time_scaling_exponent;

  std::vector<SlotOutcome> out;
  out.reserve(market.size());
  double carried = 0.0, rolled_over = 0.0;
  for (const SlotMarket& m : market) {
    SlotTerms terms;
    terms.mu_drawn = m.mu_drawn;
    terms.carried = carried;
    terms.rolled_over = rolled_over;
    terms.penalty = cell.penalty;
    terms.forced_empty = forced.count(m.slot) > 0;
    if (!terms.forced_empty) {
      bp.atomic_mev_mu = (Amount::from_double(m.mu_drawn) + Amount::from_double(rolled_over)).to_double() + carried;
      bp.returns = ReturnModel::normal(m.sigma_per_sec);
      try {
        terms.position_y = solve(bp).optimal_y;
      } catch (const NumericalError& e) {
        throw NumericalError("slot " + std::to_string(m.slot) + ": " + e.what(), e.last_iterate(), e.residual());
      } catch (const Error& e) {
        throw Error(e.code(), "slot " + std::to_string(m.slot) + ": " + e.what());
      }
      terms.deadline_price = quote_price(config, m, window);
    }
    SlotOutcome o = settle_slot(config.pool, terms);
    o.slot_index = m.slot;
    o.regime = m.regime;
    o.sigma_used = m.sigma_per_sec * std::pow(window, config.time_scaling_exponent);
    const double trailing = config.trailing_fraction * (o.amounts.non_position.to_double() + o.carried);
    carried = o.exercised ? trailing : 0.0;
    rolled_over = o.forced_empty ? trailing : 0.0;
    out.push_back(o);
  }
  return out;
}

std::vector<ReportRow> aggregate(const std::vector<SlotOutcome>& outcomes, Bucket bucket, const ScenarioConfig& config) {
  std::map<std::size_t, ReportRow> rows;
  std::map<std::size_t, double> payments;
  for (const SlotOutcome& o : outcomes) {
    const std::size_t key = bucket == Bucket::day ? o.slot_index / config.slots_per_day : o.regime;
    ReportRow& r = rows[key];
    r.bucket = key;
    ++r.slots;
    if (o.exercised) ++r.exercises;
    if (o.forced_empty) ++r.forced_empty;
    r.option_value += o.option_value_realized;
    r.penalties += o.penalty_charged;
    r.block_value += o.pi_at_deadline;
    r.builder_pnl += o.builder_pnl();
    r.mean_sigma += o.sigma_used;
    r.cexdex_share += o.block_value_vb;
    payments[key] += o.searcher_payment;
  }
  std::vector<ReportRow> out;
  out.reserve(rows.size());
  for (auto& [key, r] : rows) {
    const std::size_t decided = r.slots - r.forced_empty;
    r.exercise_prob = decided ? static_cast<double>(r.exercises) / static_cast<double>(decided) : 0.0;
    r.missed_share = config.baseline_missed_rate + (1.0 - config.baseline_missed_rate) * r.exercise_prob;
    r.mean_sigma /= static_cast<double>(r.slots);
    r.cexdex_share = r.cexdex_share > 0.0 ? payments[key] / r.cexdex_share : 0.0;
    out.push_back(r);
  }
  return out;
}

std::vector<SweepCell> sweep(const ScenarioConfig& config, unsigned jobs) {
  const auto market = market_path(config);
  std::vector<SweepCell> cells;
  for (double w : config.window_grid)
    for (double p : config.penalty_grid) cells.push_back({{w, p}});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const auto outcomes = run_scenario(config, cells[i].cell, market);
        SweepCell& c = cells[i];
        c.slots = outcomes.size();
        std::size_t decided = 0;
        for (const SlotOutcome& o : outcomes) {
          if (!o.forced_empty) ++decided;
          if (o.exercised) ++c.exercises;
          c.option_value += o.option_value_realized;
          c.builder_pnl += o.builder_pnl();
        }
        c.exercise_prob = decided ? static_cast<double>(c.exercises) / static_cast<double>(decided) : 0.0;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return cells;
}

}  // namespace freeopt
