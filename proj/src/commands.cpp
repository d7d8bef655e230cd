#include "freeopt/commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "freeopt/builder_option.hpp"
#include "freeopt/config.hpp"
#include "freeopt/csv.hpp"
#include "freeopt/errors.hpp"
#include "freeopt/penalty_controller.hpp"
#include "freeopt/replay.hpp"
#include "freeopt/slot_sim.hpp"

namespace freeopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return hex.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

namespace {

std::string num(double v) { return format_double(v); }
template <std::integral I>
std::string num(I v) {
  return std::to_string(v);
}
std::string flag(bool b) { return b ? "1" : "0"; }
std::string opt(const std::optional<double>& v, const char* missing = "") { return v ? num(*v) : missing; }
std::string finite(double v) { return std::isfinite(v) ? num(v) : std::string(); }

// Collects the files a run writes and the inputs it read.
class Run {
 public:
  Run(const CommandOptions& o) : options_(o) {
    fs::create_directories(o.out_dir);
    if (!fs::is_directory(o.out_dir)) throw IoError("cannot create output directory " + o.out_dir.string());
  }

  CsvWriter csv(const std::string& name, const std::vector<std::string>& header) {
    const fs::path p = options_.out_dir / name;
    fs::create_directories(p.parent_path());
    result.outputs.push_back(name);
    return CsvWriter(p, header);
  }

  void output(const std::string& name) { result.outputs.push_back(name); }
  void input(const fs::path& p) { inputs_.push_back(p); }
  void seed(std::uint64_t s) { seed_ = s; }
  void overrides(json o) { overrides_ = std::move(o); }

  unsigned jobs() const {
    if (options_.jobs) return options_.jobs;
    return std::max(1u, std::thread::hardware_concurrency());
  }

  void write_manifest() {
    json m;
    m["schema_version"] = 1;
    m["tool"] = "freeopt";
    m["tool_version"] = FREEOPT_VERSION;
    m["subcommand"] = options_.subcommand;
    m["config_path"] = options_.config_path.string();
    m["output_dir"] = options_.out_dir.string();
    m["seed"] = seed_ ? json(*seed_) : json(nullptr);
    m["overrides"] = overrides_.is_null() ? json::object() : overrides_;
    json in = json::array();
    for (const auto& p : inputs_) in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    m["inputs"] = in;
    json out = json::array();
    for (const auto& name : result.outputs)
      out.push_back({{"path", name}, {"sha256", sha256_file(options_.out_dir / name)}});
    m["outputs"] = out;
    std::ofstream f(options_.out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    f << m.dump(2) << '\n';
    if (!f) throw IoError("cannot write manifest");
    result.outputs.push_back("manifest.json");
  }

  CommandResult result;

 private:
  const CommandOptions& options_;
  std::vector<fs::path> inputs_;
  std::optional<std::uint64_t> seed_;
  json overrides_;
};

json overrides_of(const CommandOptions& o) {
  json j = json::object();
  if (o.windows) j["windows"] = *o.windows;
  if (o.penalties) j["penalties"] = *o.penalties;
  if (o.data_dir) j["data_dir"] = o.data_dir->string();
  return j;
}

template <class T>
const T& require(const std::optional<T>& section, const char* name) {
  if (!section) throw ConfigError(name, "section required for this subcommand");
  return *section;
}

double single(const std::optional<std::vector<double>>& grid, double fallback, const char* flag_name) {
  if (!grid) return fallback;
  if (grid->size() != 1) throw ConfigError(flag_name, "simulate takes exactly one value");
  return grid->front();
}

// ---- solve ----------------------------------------------------------------

void cmd_solve(const RunConfig& cfg, const CommandOptions& o, Run& run) {
  SolveSpec spec = require(cfg.solve, "solve");
  if (o.seed) spec.seed = *o.seed;
  if (spec.method == SolveMethod::monte_carlo) run.seed(spec.seed);
  const BuilderProblem& bp = spec.problem;
  const OptionDecision d =
      spec.method == SolveMethod::closed_form ? solve(bp) : solve_mc(bp, spec.mc_samples, spec.seed);
  const double scale = d.sigma_eff * bp.pool.liquidity_L;
  const double y_ratio = scale > 0.0 ? d.optimal_y / scale : std::nan("");
  const char* method = spec.method == SolveMethod::closed_form ? "closed_form" : "monte_carlo";
  {
    auto w = run.csv("decision.csv",
                     {"method", "optimal_y_numeraire", "value_V_numeraire", "exercise_prob_P_frac",
                      "net_option_value_numeraire", "no_option_value_numeraire", "z_star_ratio",
                      "post_trade_overshoot_frac", "sigma_eff_frac", "y_over_sigma_L_ratio", "value_se_numeraire",
                      "stationarity_residual_ratio", "iterations_count", "interior_flag"});
    w.row({method, num(d.optimal_y), num(d.value_V), num(d.exercise_prob_P), num(d.net_option_value),
           num(d.no_option_value), finite(d.z_star), num(d.post_trade_overshoot), num(d.sigma_eff), finite(y_ratio),
           num(d.value_se), num(d.stationarity_residual), std::to_string(d.iterations), flag(d.interior)});
  }
  // Objective profile for plotting, closed form only.
  if (bp.returns.kind == ReturnKind::normal && d.sigma_eff > 0.0) {
    const double hi = d.optimal_y > 0.0 ? 3.0 * d.optimal_y : std::min(max_position(bp), scale);
    auto w = run.csv("objective.csv", {"y_numeraire", "objective_numeraire", "profit_at_commit_numeraire"});
    for (int k = 0; k <= 200; ++k) {
      const double y = hi * k / 200.0;
      w.row({num(y), num(objective_closed_form(bp, y)), num(profit_at_commit(bp, y))});
    }
  }
  std::ostringstream s;
  s << "solve (" << method << ")\n"
    << "  y*            = " << num(d.optimal_y) << "\n";
  if (scale > 0.0) s << "  y*/(sigma L)  = " << num(y_ratio) << "\n";
  s << "  V*            = " << num(d.value_V) << "\n"
    << "  P*            = " << num(d.exercise_prob_P) << "\n"
    << "  net option    = " << num(d.net_option_value) << "\n"
    << "  overshoot     = " << num(d.post_trade_overshoot) << "\n"
    << "  FOC residual  = " << num(d.stationarity_residual) << " after " << d.iterations << " iterations\n";
  if (spec.method == SolveMethod::monte_carlo) s << "  MC std error  = " << num(d.value_se) << "\n";
  run.result.summary = s.str();
}

// ---- simulate / sweep -----------------------------------------------------

ScenarioConfig scenario_with_overrides(const RunConfig& cfg, const CommandOptions& o) {
  ScenarioConfig sc = require(cfg.scenario, "scenario");
  if (o.seed) sc.seed = *o.seed;
  if (o.windows) sc.window_grid = *o.windows;
  if (o.penalties) sc.penalty_grid = *o.penalties;
  try {
    sc.validate();
  } catch (const ConfigError& e) {
    if (e.field().starts_with("window_grid")) throw ConfigError("--windows", e.detail());
    if (e.field().starts_with("penalty_grid")) throw ConfigError("--penalties", e.detail());
    throw e.nested_under("scenario");
  }
  return sc;
}

void write_aggregate(Run& run, const std::string& name, const char* bucket_header, const std::vector<ReportRow>& rows) {
  auto w = run.csv(name, {bucket_header, "slots_count", "exercises_count", "forced_empty_count", "exercise_prob_frac",
                          "option_value_eth", "penalties_eth", "block_value_eth", "builder_pnl_eth",
                          "missed_share_frac", "mean_sigma_window_frac", "cexdex_share_frac"});
  for (const auto& r : rows)
    w.row({num(r.bucket), num(r.slots), num(r.exercises), num(r.forced_empty), num(r.exercise_prob),
           num(r.option_value), num(r.penalties), num(r.block_value), num(r.builder_pnl), num(r.missed_share),
           num(r.mean_sigma), num(r.cexdex_share)});
}

void cmd_simulate(const RunConfig& cfg, const CommandOptions& o, Run& run) {
  ScenarioConfig sc = require(cfg.scenario, "scenario");
  if (o.seed) sc.seed = *o.seed;
  GridCell cell{single(o.windows, cfg.simulate.window, "--windows"), single(o.penalties, cfg.simulate.penalty, "--penalties")};
  sc.window_grid = {cell.window};
  sc.penalty_grid = {cell.penalty};
  try {
    sc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.field().starts_with("window_grid") ? "simulate.window" : "scenario." + e.field(), e.detail());
  }
  run.seed(sc.seed);
  const auto market = market_path(sc);
  const auto out = run_scenario(sc, cell, market);
  {
    auto w = run.csv("slots.csv", {"slot_index", "regime_index", "sigma_per_s", "mu_drawn_eth", "carried_eth",
                                   "rolled_over_eth", "mu_effective_eth", "y_star_eth", "units_bought_tkn", "dex_paid_eth",
                                   "searcher_payment_eth", "block_value_eth", "realized_return_frac",
                                   "pi_at_deadline_eth", "exercised_flag", "forced_empty_flag", "option_value_eth",
                                   "penalty_eth", "builder_pnl_eth"});
    for (std::size_t i = 0; i < out.size(); ++i) {
      const SlotOutcome& r = out[i];
      w.row({num(r.slot_index), num(r.regime), num(market[i].sigma_per_sec), num(r.mu_drawn), num(r.carried),
             num(r.rolled_over), num(r.mu_effective), num(r.y_star), num(r.units_bought), num(r.dex_paid), num(r.searcher_payment),
             num(r.block_value_vb), num(r.realized_return), num(r.pi_at_deadline), flag(r.exercised),
             flag(r.forced_empty), num(r.option_value_realized), num(r.penalty_charged), num(r.builder_pnl())});
    }
  }
  const auto daily = aggregate(out, Bucket::day, sc);
  const auto regimes = aggregate(out, Bucket::regime, sc);
  write_aggregate(run, "daily.csv", "day_index", daily);
  write_aggregate(run, "regimes.csv", "regime_index", regimes);
  if (cfg.simulate.export_dataset) {
    const Dataset d = dataset_from_simulation(sc, market, out, cell.window);
    write_dataset(d, o.out_dir / "dataset");
    for (const char* f : {"dataset/blocks.csv", "dataset/trades.csv", "dataset/quotes.csv"}) run.output(f);
  }
  std::size_t ex = 0, forced = 0;
  double ov = 0.0;
  for (const auto& r : out) {
    ex += r.exercised;
    forced += r.forced_empty;
    ov += r.option_value_realized;
  }
  const std::size_t live = out.size() - forced;
  std::ostringstream s;
  s << "simulate: " << out.size() << " slots, window " << num(cell.window) << " s, penalty " << num(cell.penalty)
    << " ETH\n"
    << "  exercises     = " << ex << " (" << num(live ? 100.0 * ex / live : 0.0) << "% of live slots)\n"
    << "  option value  = " << num(ov) << " ETH\n"
    << "  day rows      = " << daily.size() << ", regime rows = " << regimes.size() << "\n";
  run.result.summary = s.str();
}

void cmd_sweep(const RunConfig& cfg, const CommandOptions& o, Run& run) {
  const ScenarioConfig sc = scenario_with_overrides(cfg, o);
  run.seed(sc.seed);
  const auto cells = sweep(sc, run.jobs());
  // Reductions are relative to the widest window with the smallest penalty.
  const double w_max = *std::max_element(sc.window_grid.begin(), sc.window_grid.end());
  const double p_min = *std::min_element(sc.penalty_grid.begin(), sc.penalty_grid.end());
  double base = 0.0;
  for (const auto& c : cells)
    if (c.cell.window == w_max && c.cell.penalty == p_min) base = c.exercise_prob;
  {
    auto w = run.csv("sweep.csv", {"window_s", "penalty_eth", "slots_count", "exercises_count", "exercise_prob_frac",
                                   "option_value_eth", "builder_pnl_eth", "exercise_reduction_frac"});
    for (const auto& c : cells)
      w.row({num(c.cell.window), num(c.cell.penalty), num(c.slots), num(c.exercises), num(c.exercise_prob),
             num(c.option_value), num(c.builder_pnl), base > 0.0 ? num(1.0 - c.exercise_prob / base) : ""});
  }
  std::ostringstream s;
  s << "sweep: " << sc.window_grid.size() << " windows x " << sc.penalty_grid.size() << " penalties over "
    << sc.n_slots << " slots\n";
  s << "  window_s  penalty_eth  exercise_prob\n";
  for (const auto& c : cells)
    s << "  " << std::setw(8) << num(c.cell.window) << "  " << std::setw(11) << num(c.cell.penalty) << "  "
      << num(c.exercise_prob) << "\n";
  run.result.summary = s.str();
}

// ---- replay ---------------------------------------------------------------

Dataset load_dataset(const DatasetPaths& paths, Run& run) {
  if (paths.blocks.empty()) throw ConfigError("replay.dataset_dir", "no dataset given (set it or pass --data)");
  Dataset d = read_dataset(paths.blocks, paths.trades, paths.quotes);
  for (const auto& p : {paths.blocks, paths.trades, paths.quotes}) run.input(p);
  for (const auto& diag : d.diagnostics)
    run.result.warnings.push_back(diag.file + ":" + std::to_string(diag.line) + ": " + diag.message);
  return d;
}

DatasetPaths dataset_dir(const fs::path& dir) { return {dir / "blocks.csv", dir / "trades.csv", dir / "quotes.csv"}; }

void cmd_replay(const RunConfig& cfg, const CommandOptions& o, Run& run) {
  ReplaySpec spec = cfg.replay ? *cfg.replay : ReplaySpec{};
  if (o.data_dir) spec.data = dataset_dir(*o.data_dir);
  if (o.windows) spec.windows = *o.windows;
  if (o.penalties) spec.penalties = *o.penalties;
  if (o.seed) run.result.warnings.push_back("--seed has no effect on replay");
  const Dataset data = load_dataset(spec.data, run);
  const PathSet paths = compute_paths(data, spec.replay, run.jobs());

  {
    auto w = run.csv("block_report.csv",
                     {"block_number_id", "slot_index", "builder_id", "timestamp_ms", "block_value_eth", "payments_eth",
                      "pi0_eth", "commit_divergence_eth", "option_value_end_eth", "max_option_value_eth",
                      "partial_flag", "flagged_trades_id"});
    for (std::size_t i = 0; i < data.blocks.size(); ++i) {
      const BlockRecord& b = data.blocks[i];
      const BlockValuePath& p = paths.paths[i];
      double max_ov = 0.0;
      bool any = false;
      for (double v : p.option_values)
        if (!std::isnan(v)) max_ov = std::max(max_ov, v), any = true;
      std::string flagged;
      for (const auto& id : p.flagged_trades) flagged += (flagged.empty() ? "" : ";") + id;
      w.row({num(b.block_number), num(b.slot), b.builder_id, num(b.timestamp_ms), b.total_value.to_string(),
             b.payments.to_string(), finite(p.values.front()),
             std::isnan(p.values.front()) ? "" : num(p.commit_divergence), finite(p.option_values.back()),
             any ? num(max_ov) : "", flag(p.partial), flagged});
    }
  }
  {
    auto w = run.csv("paths.csv", {"block_number_id", "t_s", "value_eth", "option_value_eth"});
    for (const auto& p : paths.paths)
      for (std::size_t k = 0; k < p.grid_seconds.size(); ++k)
        w.row({num(p.block_number), num(p.grid_seconds[k]), std::isnan(p.values[k]) ? "" : num(p.values[k]),
               std::isnan(p.option_values[k]) ? "" : num(p.option_values[k])});
  }

  std::vector<std::pair<bool, MitigationReport>> reports;
  reports.emplace_back(false, mitigation_counterfactual(data, paths, spec.windows, spec.penalties, false, spec.replay));
  if (spec.trailing)
    reports.emplace_back(true, mitigation_counterfactual(data, paths, spec.windows, spec.penalties, true, spec.replay));
  {
    auto w = run.csv("mitigation.csv", {"window_s", "penalty_eth", "trailing_flag", "blocks_count", "exercises_count",
                                        "exercise_prob_frac", "option_value_eth"});
    for (const auto& [trailing, rep] : reports)
      for (const auto& c : rep.cells)
        w.row({num(c.window), num(c.penalty), flag(trailing), num(c.blocks), num(c.exercises), num(c.exercise_prob),
               num(c.option_value)});
  }
  {
    auto w = run.csv("mitigation_daily.csv", {"bucket_index", "window_s", "penalty_eth", "trailing_flag", "blocks_count",
                                              "exercises_count", "exercise_prob_frac", "option_value_eth"});
    for (const auto& [trailing, rep] : reports)
      for (const auto& c : rep.daily)
        w.row({num(c.bucket), num(c.window), num(c.penalty), flag(trailing), num(c.blocks), num(c.exercises),
               num(c.exercise_prob), num(c.option_value)});
  }

  const HeterogeneityReport het =
      heterogeneity_report(data, paths, spec.heterogeneity_window, spec.heterogeneity_penalty, spec.replay);
  {
    auto w = run.csv("builders.csv", {"builder_id", "blocks_count", "market_share_frac", "mean_cexdex_share_frac",
                                      "exercises_count", "exercise_prob_frac", "low_sample_flag"});
    for (const auto& b : het.builders)
      w.row({b.builder_id, num(b.blocks), num(b.market_share), num(b.mean_cexdex_share), num(b.exercises),
             num(b.exercise_prob), flag(b.low_sample)});
  }
  {
    auto w = run.csv("daily_cross_section.csv", {"bucket_index", "cexdex_share_frac", "exercise_prob_frac"});
    for (std::size_t i = 0; i < het.daily_buckets.size(); ++i)
      w.row({num(het.daily_buckets[i]), num(het.daily_cexdex_share[i]), num(het.daily_exercise_prob[i])});
  }
  {
    auto w = run.csv("correlation.csv", {"days_count", "pearson_r_ratio", "p_value_frac"});
    w.row({num(het.daily_correlation.n), num(het.daily_correlation.r), num(het.daily_correlation.p_value)});
  }
  {
    auto w = run.csv("volatility.csv", {"token_id", "bucket_index", "quotes_count", "log10_range_ratio"});
    for (const auto& [token, series] : data.quotes)
      for (const auto& r : volatility_metric(series, spec.replay.bucket_ms))
        w.row({token, num(r.bucket), num(r.quotes), num(r.log10_range)});
  }
  if (paths.partial)
    run.result.warnings.push_back(std::to_string(paths.partial) + " partial block(s) " +
                                  (spec.replay.include_partial ? "included in" : "excluded from") +
                                  " the counterfactuals");

  std::ostringstream s;
  s << "replay: " << paths.ingested << " block rows (" << paths.complete << " complete, " << paths.partial
    << " partial, " << paths.rejected << " rejected); " << data.rejected_trades << " trade and "
    << data.rejected_quotes << " quote rows rejected\n";
  for (const auto& [trailing, rep] : reports)
    for (const auto& c : rep.cells)
      s << "  window " << num(c.window) << " s, penalty " << num(c.penalty) << " ETH" << (trailing ? ", trailing" : "")
        << ": " << c.exercises << "/" << c.blocks << " exercised, option value " << num(c.option_value) << " ETH\n";
  s << "  daily share/exercise correlation r = " << num(het.daily_correlation.r) << " (n = " << het.daily_correlation.n
    << ", p = " << num(het.daily_correlation.p_value) << ")\n";
  run.result.summary = s.str();
}

// ---- control --------------------------------------------------------------

void cmd_control(const RunConfig& cfg, const CommandOptions& o, Run& run) {
  ControlSpec spec = require(cfg.control, "control");
  if (o.seed) spec.seed = *o.seed;
  run.seed(spec.seed);
  EnvironmentSpec& env_spec = spec.environment;

  std::unique_ptr<Environment> env;
  std::optional<Dataset> data;
  std::optional<PathSet> paths;
  switch (env_spec.kind) {
    case EnvironmentKind::gaussian:
      env = std::make_unique<ProbabilityEnvironment>(gaussian_environment(env_spec.c, env_spec.s));
      break;
    case EnvironmentKind::piecewise:
      env = std::make_unique<ProbabilityEnvironment>(piecewise_gaussian_environment(env_spec.segments));
      break;
    case EnvironmentKind::replay:
      if (o.data_dir) env_spec.data = dataset_dir(*o.data_dir);
      data = load_dataset(env_spec.data, run);
      paths = compute_paths(*data, env_spec.replay, run.jobs());
      env = std::make_unique<ReplayEnvironment>(*data, *paths, env_spec.window, env_spec.trailing, env_spec.replay);
      if (paths->partial)
        run.result.warnings.push_back(std::to_string(paths->partial) + " partial block(s) " +
                                      (env_spec.replay.include_partial ? "included" : "skipped"));
      break;
  }
  const ControlRun cr = run_controlled(*env, spec.controller, spec.rounds, spec.seed, true);
  {
    auto w = run.csv("trace.csv", {"t_index", "penalty_eth", "exercised_flag", "exercise_prob_frac", "p_star_eth"});
    for (const auto& r : cr.trace)
      if ((r.t - 1) % spec.trace_stride == 0) w.row({num(r.t), num(r.p), std::to_string(r.y), opt(r.q), opt(r.p_star)});
  }
  const RegretReport& rr = cr.report;
  {
    auto w = run.csv("regret.csv", {"rounds_count", "R_T_eth", "C_T_rounds", "LC_T_rounds", "path_length_P_star_eth",
                                    "avg_penalty_eth", "avg_exercise_rate_frac", "martingale_gap_rounds",
                                    "target_alpha_frac"});
    w.row({num(rr.rounds), opt(rr.R_T, "unavailable"), opt(rr.C_T, "unavailable"), num(rr.LC_T),
           opt(rr.path_length_P_star, "unavailable"), num(rr.avg_penalty), num(rr.avg_exercise_rate),
           opt(rr.martingale_gap, "unavailable"), num(spec.controller.target_alpha)});
  }
  std::ostringstream s;
  s << "control: " << rr.rounds << " rounds, target alpha " << num(spec.controller.target_alpha) << "\n"
    << "  avg exercise rate = " << num(rr.avg_exercise_rate) << "\n"
    << "  avg penalty       = " << num(rr.avg_penalty) << " ETH\n"
    << "  R_T               = " << opt(rr.R_T, "unavailable") << "\n"
    << "  C_T               = " << opt(rr.C_T, "unavailable") << "\n"
    << "  LC_T              = " << num(rr.LC_T) << "\n";
  run.result.summary = s.str();
}

}  // namespace

CommandResult run_command(const CommandOptions& o) {
  using Handler = void (*)(const RunConfig&, const CommandOptions&, Run&);
  static const std::pair<const char*, Handler> handlers[] = {
      {"solve", cmd_solve}, {"simulate", cmd_simulate}, {"sweep", cmd_sweep}, {"replay", cmd_replay}, {"control", cmd_control}};
  Handler handler = nullptr;
  for (const auto& [name, h] : handlers)
    if (o.subcommand == name) handler = h;
  if (!handler) throw ConfigError("subcommand", "unknown subcommand \"" + o.subcommand + "\"");
  if (o.config_path.empty() && o.subcommand != "replay") throw ConfigError("--config", "required");
  if (o.config_path.empty() && !o.data_dir) throw ConfigError("--config", "required (or pass --data for replay)");

  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  Run run(o);
  if (!o.config_path.empty()) run.input(o.config_path);
  run.overrides(overrides_of(o));
  handler(cfg, o, run);
  run.write_manifest();
  return std::move(run.result);
}

}  // namespace freeopt
