#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "freeopt/accounting.hpp"
#include "freeopt/penalty_controller.hpp"
#include "freeopt/slot_sim.hpp"

namespace freeopt {

// ---- Records -------------------------------------------------------------

struct TradeRecord {
  std::string trade_id;
  std::uint64_t block_number = 0;
  std::string searcher_id;
  std::string token_buy;
  Amount amount_buy;
  std::string token_sell;
  Amount amount_sell;
  Amount tip;
  Amount transfer;
  Amount base_fee;

  Amount payment() const noexcept { return tip + transfer; }
};

struct BlockRecord {
  std::uint64_t slot = 0;
  std::uint64_t block_number = 0;
  std::string builder_id;
  std::int64_t timestamp_ms = 0;  // slot time; markout horizons are measured from here
  Amount total_value;             // v_b
  std::vector<std::size_t> trades;  // indices into Dataset::trades, in file order
  Amount payments;                  // sum of tip + transfer over the trades
  bool has_bad_trade = false;       // a trade row for this block was rejected

  Amount non_position_value() const noexcept { return total_value - payments; }
};

// Mid prices in ETH for one token, strictly increasing in time.
struct QuoteSeries {
  std::string token;
  std::vector<std::int64_t> timestamps_ms;
  std::vector<Amount> prices;

  // Last observation at or before t if it is at most `staleness_ms` old.
  std::optional<double> lookup(std::int64_t t_ms, std::int64_t staleness_ms) const;
};

struct Diagnostic {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct Dataset {
  std::vector<BlockRecord> blocks;  // ordered by slot
  std::vector<TradeRecord> trades;
  std::map<std::string, QuoteSeries> quotes;
  std::size_t block_rows = 0;       // data rows read from the block table
  std::size_t rejected_blocks = 0;  // block rows that failed validation
  std::size_t rejected_trades = 0;
  std::size_t rejected_quotes = 0;
  std::vector<Diagnostic> diagnostics;
};

// ETH and WETH are the unit of account and need no quotes.
bool is_eth(const std::string& token);

// Reads blocks.csv, trades.csv and quotes.csv from `dir`. Malformed rows are
// rejected with a line-numbered diagnostic; missing files or headers throw.
Dataset read_dataset(const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& blocks, const std::filesystem::path& trades,
                     const std::filesystem::path& quotes);
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// The simulator's committed blocks in the replay schema: one block per slot
// that was not forced empty, one trade when a position was taken, and a quote
// path for the risky token on the half-second grid plus the window instant.
Dataset dataset_from_simulation(const ScenarioConfig& config, const std::vector<SlotMarket>& market,
                                const std::vector<SlotOutcome>& outcomes, double window);

// ---- Valuation -----------------------------------------------------------

struct ReplayConfig {
  double taker_fee_rate = default_taker_fee_rate;
  std::int64_t staleness_ms = 2000;
  double grid_step_seconds = 0.5;
  double grid_end_seconds = 8.0;
  bool include_partial = false;
  double trailing_fraction = 1.0;
  std::int64_t bucket_ms = 86'400'000;  // daily aggregates

  void validate() const;
};

// pi_j(t) for one trade, or nullopt when a leg has no usable quote at t.
std::optional<double> markout(const TradeRecord& trade, const Dataset& data, std::int64_t t_ms,
                              const ReplayConfig& config);

// Pi_b at `seconds` after the slot time; nullopt if any trade cannot be marked
// or a trade row for the block was rejected.
std::optional<double> block_value_at(const BlockRecord& block, const Dataset& data, double seconds,
                                     const ReplayConfig& config, double carried = 0.0);

struct BlockValuePath {
  std::uint64_t block_number = 0;
  std::uint64_t slot = 0;
  std::vector<double> grid_seconds;
  std::vector<double> values;          // Pi_b(t); NaN where unmarkable
  std::vector<double> option_values;   // max(0, -Pi_b(t))
  bool partial = false;
  std::vector<std::string> flagged_trades;
  double commit_divergence = 0.0;      // Pi_b(0) - v_b

  // Value at t by exact grid match; nullopt off-grid or when unmarkable.
  std::optional<double> at(double seconds) const;
};

BlockValuePath block_value_path(const BlockRecord& block, const Dataset& data, const ReplayConfig& config);

struct PathSet {
  std::vector<BlockValuePath> paths;  // same order as Dataset::blocks
  std::size_t ingested = 0;
  std::size_t complete = 0;
  std::size_t partial = 0;
  std::size_t rejected = 0;
};

PathSet compute_paths(const Dataset& data, const ReplayConfig& config, unsigned jobs = 1);

// ---- Counterfactuals -----------------------------------------------------

struct BlockDecision {
  std::uint64_t block_number = 0;
  std::uint64_t slot = 0;
  double carried = 0.0;
  double value = 0.0;  // Pi_b(window) + carried
  bool exercised = false;
  double option_value = 0.0;
};

struct MitigationCell {
  double window = 0.0;
  double penalty = 0.0;
  std::size_t blocks = 0;
  std::size_t exercises = 0;
  double exercise_prob = 0.0;
  double option_value = 0.0;
  std::vector<BlockDecision> decisions;  // kept only when requested
};

struct DailyCell {
  std::int64_t bucket = 0;  // timestamp_ms / bucket_ms
  double window = 0.0;
  double penalty = 0.0;
  std::size_t blocks = 0;
  std::size_t exercises = 0;
  double exercise_prob = 0.0;
  double option_value = 0.0;
};

struct MitigationReport {
  std::vector<MitigationCell> cells;  // window-major
  std::vector<DailyCell> daily;
};

// Exercise iff Pi_b(window) + carried < -penalty, in slot order. With
// trailing, a block right after an exercised block carries
// trailing_fraction * (its non-position value + its own carry).
MitigationReport mitigation_counterfactual(const Dataset& data, const PathSet& paths,
                                           const std::vector<double>& windows, const std::vector<double>& penalties,
                                           bool trailing, const ReplayConfig& config, bool keep_decisions = false);

// Controller environment over recorded blocks. Round t is the t-th usable
// block in slot order; the builder exercises iff Pi_b(window) + carry < -p,
// with the carry of the trailing rule when enabled. The exercise probability
// is unknown, so regret against a per-round optimum is unavailable. Rounds
// must be played in order.
class ReplayEnvironment : public Environment {
 public:
  ReplayEnvironment(const Dataset& data, const PathSet& paths, double window, bool trailing,
                    const ReplayConfig& config);
  int outcome(std::uint64_t t, double p, double u) override;
  std::optional<double> exercise_probability(std::uint64_t, double) const override { return std::nullopt; }
  std::optional<std::uint64_t> horizon() const override { return rounds_.size(); }

 private:
  struct Round {
    std::uint64_t slot;
    double value;         // Pi_b(window) without carry
    double non_position;  // v_b - payments, the trailing value left to the next block
  };
  std::vector<Round> rounds_;
  bool trailing_;
  double fraction_;
  std::uint64_t next_ = 1;
  bool prev_exercised_ = false;
  double prev_carry_ = 0.0;
};

// ---- Cross-section -------------------------------------------------------

struct Correlation {
  std::size_t n = 0;
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 degrees of freedom
};

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

struct BuilderRow {
  std::string builder_id;
  std::size_t blocks = 0;
  double market_share = 0.0;
  double mean_cexdex_share = 0.0;  // mean over blocks of payments / v_b
  std::size_t exercises = 0;
  double exercise_prob = 0.0;
  bool low_sample = false;         // fewer than 30 blocks
};

struct HeterogeneityReport {
  std::vector<BuilderRow> builders;  // sorted by block count, descending
  std::vector<std::int64_t> daily_buckets;  // timestamp_ms / bucket_ms
  std::vector<double> daily_cexdex_share;
  std::vector<double> daily_exercise_prob;
  Correlation daily_correlation;
};

HeterogeneityReport heterogeneity_report(const Dataset& data, const PathSet& paths, double window, double penalty,
                                         const ReplayConfig& config);

struct VolatilityRow {
  std::int64_t bucket = 0;
  std::size_t quotes = 0;
  double log10_range = 0.0;  // log10(P_high / P_low)
};

// Buckets with no quotes produce no row.
std::vector<VolatilityRow> volatility_metric(const QuoteSeries& quotes, std::int64_t bucket_ms);

}  // namespace freeopt
