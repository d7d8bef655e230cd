#include "freeopt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "freeopt/errors.hpp"

namespace freeopt {

namespace {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Typed access to one JSON object. Tracks which keys were read so that
// leftovers (typos, stale fields) can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(join(path_, key), "expected a number");
    return v->get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!raw(key)) return std::nullopt;
    return number(key, 0.0);
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) throw ConfigError(join(path_, key), "must be >= 0");
    throw ConfigError(join(path_, key), "expected a non-negative integer");
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(join(path_, key), "expected an integer");
    return v->get<std::int64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v->get<std::string>();
  }

  template <class E>
  E choice(const std::string& key, E fallback, std::initializer_list<std::pair<const char*, E>> names) {
    if (!raw(key)) return fallback;
    const std::string s = string(key, "");
    std::string allowed;
    for (const auto& [name, value] : names) {
      if (s == name) return value;
      allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(join(path_, key), "unknown value \"" + s + "\" (expected one of " + allowed + ")");
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_array()) throw ConfigError(join(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw ConfigError(join(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  // Array of objects; calls f(Section) for each element.
  template <class F>
  void objects(const std::string& key, F&& f) {
    const json* v = raw(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(join(path_, key), "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      Section s((*v)[i], join(path_, key) + "[" + std::to_string(i) + "]");
      f(s);
      s.finish();
    }
  }

  std::optional<Section> child(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return Section(*v, join(path_, key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs `f`, re-labelling domain validation errors with the section path.
template <class F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw e.nested_under(path);
  }
}

PoolState parse_pool(Section& s, PoolState pool) {
  pool.liquidity_L = s.number("liquidity_L", pool.liquidity_L);
  pool.cex_price_P0 = s.number("cex_price_P0", pool.cex_price_P0);
  pool.price_gap_delta = s.number("price_gap_delta", pool.price_gap_delta);
  pool.side = s.choice("side", pool.side, {{"buy", TradeSide::buy}, {"sell", TradeSide::sell}});
  pool.cost_model =
      s.choice("cost_model", pool.cost_model, {{"quadratic", CostModel::quadratic}, {"cpmm", CostModel::cpmm}});
  s.finish();
  return pool;
}

ReturnModel parse_returns(Section& s) {
  ReturnModel r;
  r.kind = s.choice("kind", ReturnKind::normal,
                    {{"normal", ReturnKind::normal}, {"empirical", ReturnKind::empirical}, {"mixture", ReturnKind::mixture}});
  r.volatility_sigma = s.number("volatility_sigma", 0.0);
  r.samples = s.numbers("samples", {});
  s.objects("components", [&](Section& c) {
    MixtureComponent m;
    m.weight = c.number("weight", m.weight);
    m.mean = c.number("mean", m.mean);
    m.stddev = c.number("stddev", m.stddev);
    r.components.push_back(m);
  });
  r.truncation_floor = s.number("truncation_floor", r.truncation_floor);
  s.finish();
  return r;
}

BuilderProblem parse_problem(Section& s) {
  BuilderProblem bp;
  bp.atomic_mev_mu = s.number("atomic_mev_mu", bp.atomic_mev_mu);
  if (auto pool = s.child("pool")) bp.pool = parse_pool(*pool, bp.pool);
  if (auto ret = s.child("returns")) bp.returns = parse_returns(*ret);
  bp.window_tau = s.number("window_tau", bp.window_tau);
  bp.penalty_p = s.number("penalty_p", bp.penalty_p);
  bp.time_scaling_exponent = s.number("time_scaling_exponent", bp.time_scaling_exponent);
  s.finish();
  validated(s.path(), [&] { bp.validate(); });
  return bp;
}

SolveSpec parse_solve(Section& s) {
  SolveSpec spec;
  auto problem = s.child("problem");
  if (!problem) throw ConfigError(join(s.path(), "problem"), "required");
  spec.problem = parse_problem(*problem);
  spec.method = s.choice("method", spec.method,
                         {{"closed_form", SolveMethod::closed_form}, {"monte_carlo", SolveMethod::monte_carlo}});
  spec.mc_samples = s.unsigned_integer("mc_samples", spec.mc_samples);
  spec.seed = s.unsigned_integer("seed", spec.seed);
  s.finish();
  if (spec.method == SolveMethod::monte_carlo && spec.mc_samples < 1000)
    throw ConfigError(join(s.path(), "mc_samples"), "must be >= 1000");
  return spec;
}

ScenarioConfig parse_scenario(Section& s) {
  ScenarioConfig c;
  c.n_slots = s.unsigned_integer("n_slots", c.n_slots);
  c.slot_seconds = s.number("slot_seconds", c.slot_seconds);
  c.window_grid = s.numbers("window_grid", c.window_grid);
  c.penalty_grid = s.numbers("penalty_grid", c.penalty_grid);
  if (s.has("regimes")) {
    c.regimes.clear();
    s.objects("regimes", [&](Section& r) {
      VolatilityRegime v;
      v.sigma_per_sec = r.number("sigma_per_sec", v.sigma_per_sec);
      v.mean_dwell_slots = r.number("mean_dwell_slots", v.mean_dwell_slots);
      c.regimes.push_back(v);
    });
  }
  if (auto mu = s.child("mu")) {
    c.mu.kind = mu->choice("kind", c.mu.kind, {{"lognormal", MuKind::lognormal}, {"fixed", MuKind::fixed}});
    c.mu.mean = mu->number("mean", c.mu.mean);
    c.mu.log_sd = mu->number("log_sd", c.mu.log_sd);
    mu->finish();
  }
  if (auto pool = s.child("pool")) c.pool = parse_pool(*pool, c.pool);
  c.time_scaling_exponent = s.number("time_scaling_exponent", c.time_scaling_exponent);
  c.trailing_fraction = s.number("trailing_fraction", c.trailing_fraction);
  c.baseline_missed_rate = s.number("baseline_missed_rate", c.baseline_missed_rate);
  c.slots_per_day = s.unsigned_integer("slots_per_day", c.slots_per_day);
  c.cexdex_share_target = s.optional_number("cexdex_share_target");
  if (const json* v = s.raw("forced_empty_slots")) {
    if (!v->is_array()) throw ConfigError(join(s.path(), "forced_empty_slots"), "expected an array of slot indices");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_unsigned())
        throw ConfigError(join(s.path(), "forced_empty_slots") + "[" + std::to_string(i) + "]",
                          "expected a non-negative integer");
      c.forced_empty_slots.push_back((*v)[i].get<std::size_t>());
    }
  }
  c.seed = s.unsigned_integer("seed", c.seed);
  s.finish();
  validated(s.path(), [&] { c.validate(); });
  return c;
}

DatasetPaths parse_dataset(Section& s, const std::filesystem::path& base) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  };
  DatasetPaths d;
  const std::string dir = s.string("dataset_dir", "");
  if (!dir.empty()) {
    d.blocks = resolve(dir) / "blocks.csv";
    d.trades = resolve(dir) / "trades.csv";
    d.quotes = resolve(dir) / "quotes.csv";
  }
  for (auto [key, target] : {std::pair{"blocks", &d.blocks}, {"trades", &d.trades}, {"quotes", &d.quotes}}) {
    const std::string p = s.string(key, "");
    if (!p.empty()) *target = resolve(p);
  }
  return d;
}

ReplayConfig parse_replay_config(Section& s) {
  ReplayConfig r;
  r.taker_fee_rate = s.number("taker_fee_rate", r.taker_fee_rate);
  r.staleness_ms = s.integer("staleness_ms", r.staleness_ms);
  r.grid_step_seconds = s.number("grid_step_seconds", r.grid_step_seconds);
  r.grid_end_seconds = s.number("grid_end_seconds", r.grid_end_seconds);
  r.include_partial = s.boolean("include_partial", r.include_partial);
  r.trailing_fraction = s.number("trailing_fraction", r.trailing_fraction);
  r.bucket_ms = s.integer("bucket_ms", r.bucket_ms);
  return r;
}

void check_grid(const std::vector<double>& grid, const std::string& field) {
  if (grid.empty()) throw ConfigError(field, "must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i]))
      throw ConfigError(field + "[" + std::to_string(i) + "]", "must be a finite value >= 0");
}

ReplaySpec parse_replay(Section& s, const std::filesystem::path& base) {
  ReplaySpec spec;
  spec.data = parse_dataset(s, base);
  spec.replay = parse_replay_config(s);
  spec.windows = s.numbers("windows", spec.windows);
  spec.penalties = s.numbers("penalties", spec.penalties);
  spec.trailing = s.boolean("trailing", spec.trailing);
  if (auto h = s.child("heterogeneity")) {
    spec.heterogeneity_window = h->number("window", spec.heterogeneity_window);
    spec.heterogeneity_penalty = h->number("penalty", spec.heterogeneity_penalty);
    h->finish();
  }
  s.finish();
  validated(s.path(), [&] { spec.replay.validate(); });
  check_grid(spec.windows, join(s.path(), "windows"));
  check_grid(spec.penalties, join(s.path(), "penalties"));
  check_grid({spec.heterogeneity_window}, join(s.path(), "heterogeneity.window"));
  check_grid({spec.heterogeneity_penalty}, join(s.path(), "heterogeneity.penalty"));
  return spec;
}

ControlSpec parse_control(Section& s, const std::filesystem::path& base) {
  ControlSpec spec;
  if (auto c = s.child("controller")) {
    ControllerConfig& cc = spec.controller;
    cc.target_alpha = c->number("target_alpha", cc.target_alpha);
    cc.step_rule = c->choice("step_rule", cc.step_rule, {{"decaying", StepRule::decaying}, {"fixed", StepRule::fixed}});
    cc.step_c = c->number("step_c", cc.step_c);
    cc.fixed_step = c->number("fixed_step", cc.fixed_step);
    cc.p_max = c->number("p_max", cc.p_max);
    cc.initial_p = c->number("initial_p", cc.initial_p);
    c->finish();
    validated(c->path(), [&] { cc.validate(); });
  }
  auto e = s.child("environment");
  if (!e) throw ConfigError(join(s.path(), "environment"), "required");
  EnvironmentSpec& env = spec.environment;
  env.kind = e->choice("kind", env.kind,
                       {{"gaussian", EnvironmentKind::gaussian},
                        {"piecewise", EnvironmentKind::piecewise},
                        {"replay", EnvironmentKind::replay}});
  switch (env.kind) {
    case EnvironmentKind::gaussian:
      env.c = e->number("c", env.c);
      env.s = e->number("s", env.s);
      if (!(env.s > 0.0)) throw ConfigError(join(e->path(), "s"), "must be positive");
      break;
    case EnvironmentKind::piecewise:
      e->objects("segments", [&](Section& g) {
        GaussianSegment seg;
        seg.start = g.unsigned_integer("start", seg.start);
        seg.c = g.number("c", seg.c);
        seg.s = g.number("s", seg.s);
        env.segments.push_back(seg);
      });
      validated(e->path(), [&] { piecewise_gaussian_environment(env.segments); });
      break;
    case EnvironmentKind::replay:
      env.data = parse_dataset(*e, base);
      env.replay = parse_replay_config(*e);
      env.window = e->number("window", env.window);
      env.trailing = e->boolean("trailing", env.trailing);
      validated(e->path(), [&] { env.replay.validate(); });
      check_grid({env.window}, join(e->path(), "window"));
      if (env.data.blocks.empty()) throw ConfigError(join(e->path(), "dataset_dir"), "required for a replay environment");
      break;
  }
  e->finish();
  spec.rounds = s.unsigned_integer("rounds", spec.rounds);
  spec.seed = s.unsigned_integer("seed", spec.seed);
  spec.trace_stride = s.unsigned_integer("trace_stride", spec.trace_stride);
  s.finish();
  if (spec.trace_stride == 0) throw ConfigError(join(s.path(), "trace_stride"), "must be >= 1");
  return spec;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  Section root(doc, "");
  const json* version = root.raw("schema_version");
  if (!version) throw ConfigError("schema_version", "required");
  if (!version->is_number_integer() || version->get<std::int64_t>() != config_schema_version)
    throw ConfigError("schema_version", "unsupported version (expected " + std::to_string(config_schema_version) + ")");

  RunConfig cfg;
  if (auto s = root.child("solve")) cfg.solve = parse_solve(*s);
  if (auto s = root.child("scenario")) cfg.scenario = parse_scenario(*s);
  if (auto s = root.child("simulate")) {
    cfg.simulate.window = s->number("window", cfg.simulate.window);
    cfg.simulate.penalty = s->number("penalty", cfg.simulate.penalty);
    cfg.simulate.export_dataset = s->boolean("export_dataset", cfg.simulate.export_dataset);
    s->finish();
    check_grid({cfg.simulate.penalty}, "simulate.penalty");
  }
  if (auto s = root.child("replay")) cfg.replay = parse_replay(*s, base_dir);
  if (auto s = root.child("control")) cfg.control = parse_control(*s, base_dir);
  root.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config(ss.str(), path.parent_path());
  cfg.source = path;
  return cfg;
}

std::vector<double> parse_grid(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(pos, end - pos);
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    item = b == std::string::npos ? "" : item.substr(b, e - b + 1);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw ConfigError(field + "[" + std::to_string(out.size()) + "]", "not a number: \"" + item + "\"");
    out.push_back(v);
    pos = end + 1;
  }
  check_grid(out, field);
  return out;
}

}  // namespace freeopt
