#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "freeopt/accounting.hpp"
#include "freeopt/market_model.hpp"

namespace freeopt {

// One state of the volatility chain. The chain leaves a state with
// probability 1 / mean_dwell_slots per slot and then moves to one of the
// other states uniformly.
struct VolatilityRegime {
  double sigma_per_sec = 1e-4;
  double mean_dwell_slots = 7200.0;
};

enum class MuKind { lognormal, fixed };

// Per-slot atomic (non-position) value. Lognormal with the given mean and
// log-scale standard deviation, or a constant.
struct MuProcess {
  MuKind kind = MuKind::lognormal;
  double mean = 2.0;
  double log_sd = 1.0;
};

struct ScenarioConfig {
  std::size_t n_slots = 7200;
  double slot_seconds = 12.0;
  std::vector<double> window_grid{2.0, 4.0, 6.0, 8.0};
  std::vector<double> penalty_grid{0.0, 0.075, 0.15, 0.5};
  std::vector<VolatilityRegime> regimes{{1e-4, 7200.0}, {3e-4, 7200.0}};
  MuProcess mu;
  PoolState pool{1.0e6, 1.0, 0.0005, TradeSide::buy, CostModel::quadratic};
  double time_scaling_exponent = 0.5;
  double trailing_fraction = 1.0;
  double baseline_missed_rate = 0.0;
  std::size_t slots_per_day = 7200;
  std::optional<double> cexdex_share_target;
  // Slots left empty regardless of the builder (non-option misses).
  std::vector<std::size_t> forced_empty_slots;
  std::uint64_t seed = 1;

  // ConfigError with the offending field name.
  void validate() const;
};

struct GridCell {
  double window = 8.0;
  double penalty = 0.0;
};

// Market draws for one slot. Shared by every grid cell (common random numbers).
struct SlotMarket {
  std::size_t slot = 0;
  std::size_t regime = 0;
  double sigma_per_sec = 0.0;
  double mu_drawn = 0.0;
  double z = 0.0;         // standard normal driving the CEX move in this slot
};

std::vector<SlotMarket> market_path(const ScenarioConfig& config);

// CEX price of the risky asset t seconds after commitment: P0 (1 + sigma t^s z),
// floored just above zero and rounded to the 18-digit grid.
double quote_price(const ScenarioConfig& config, const SlotMarket& market, double seconds);

// Exact amounts behind a settled slot, as they would appear in the block and
// trade tables (no trade when units == 0).
struct SettledAmounts {
  Amount non_position;    // v_b - payments
  Amount payment;         // searcher tip
  Amount block_value;     // v_b
  Amount units;           // risky units bought
  Amount paid;            // numeraire sold to the pool
  Amount deadline_price;  // CEX price at the deadline
};

struct SlotOutcome {
  std::size_t slot_index = 0;
  std::size_t regime = 0;
  double mu_drawn = 0.0;
  double carried = 0.0;         // trailing value from the previous exercised slot
  double rolled_over = 0.0;     // value inherited from a forced-empty slot, recorded in this block
  double mu_effective = 0.0;    // mu_drawn + rolled_over + carried
  double sigma_used = 0.0;      // window volatility sigma t^s
  double y_star = 0.0;
  double units_bought = 0.0;    // risky units, on the 18-digit grid
  double dex_paid = 0.0;        // numeraire paid to the pool, on the grid
  double searcher_payment = 0.0;
  double block_value_vb = 0.0;
  double realized_return = 0.0;
  double pi_at_deadline = 0.0;
  bool exercised = false;
  bool forced_empty = false;
  double option_value_realized = 0.0;
  double penalty_charged = 0.0;
  SettledAmounts amounts;

  bool empty() const noexcept { return exercised || forced_empty; }
  // Pi if revealed, -p if withheld.
  double builder_pnl() const noexcept { return pi_at_deadline + option_value_realized - penalty_charged; }
};

// Settles one slot for a given position: quantizes the trade, marks it at the
// deadline price and applies the reveal rule Pi < -p.
struct SlotTerms {
  double mu_drawn = 0.0;
  double carried = 0.0;
  // Trailing value from a forced-empty predecessor. Unlike `carried` it is
  // part of the block as recorded, the way a block after a missed slot holds
  // the transactions that rolled over.
  double rolled_over = 0.0;
  double position_y = 0.0;
  double deadline_price = 1.0;
  double penalty = 0.0;
  bool forced_empty = false;
};
SlotOutcome settle_slot(const PoolState& pool, const SlotTerms& terms);

// Slots in order for one (window, penalty) cell. Solver failures are rethrown
// with the slot index in the message.
std::vector<SlotOutcome> run_scenario(const ScenarioConfig& config, GridCell cell);
std::vector<SlotOutcome> run_scenario(const ScenarioConfig& config, GridCell cell, const std::vector<SlotMarket>& market);

enum class Bucket { day, regime };

struct ReportRow {
  std::size_t bucket = 0;
  std::size_t slots = 0;
  std::size_t exercises = 0;
  std::size_t forced_empty = 0;
  double exercise_prob = 0.0;
  double option_value = 0.0;   // sum of realized option values
  double penalties = 0.0;
  double block_value = 0.0;    // sum of Pi at the deadline
  double builder_pnl = 0.0;
  double missed_share = 0.0;   // baseline + (1 - baseline) * exercise_prob
  double mean_sigma = 0.0;
  double cexdex_share = 0.0;   // searcher payments / total block value
};

std::vector<ReportRow> aggregate(const std::vector<SlotOutcome>& outcomes, Bucket bucket, const ScenarioConfig& config);

struct SweepCell {
  GridCell cell;
  std::size_t slots = 0;
  std::size_t exercises = 0;
  double exercise_prob = 0.0;
  double option_value = 0.0;
  double builder_pnl = 0.0;
};

// window x penalty matrix, window-major, over one shared market path.
std::vector<SweepCell> sweep(const ScenarioConfig& config, unsigned jobs = 1);

}  // namespace freeopt
