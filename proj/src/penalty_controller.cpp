#include "freeopt/penalty_controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "freeopt/errors.hpp"
#include "freeopt/market_model.hpp"
#include "freeopt/rng.hpp"

namespace freeopt {

namespace {

constexpr std::uint64_t kOutcomeStream = 21;
constexpr double kBisectionTol = 1e-9;
constexpr double kMonotoneTol = 1e-12;
constexpr int kMonotoneProbes = 256;

}  // namespace

void ControllerConfig::validate() const {
  if (!(target_alpha > 0.0 && target_alpha < 1.0)) throw ConfigError("target_alpha", "must lie in (0, 1)");
  if (step_rule == StepRule::decaying && !(step_c > 0.0 && std::isfinite(step_c)))
    throw ConfigError("step_c", "must be positive");
  if (step_rule == StepRule::fixed && !(fixed_step > 0.0 && std::isfinite(fixed_step)))
    throw ConfigError("fixed_step", "must be positive");
  if (!(p_max > 0.0 && std::isfinite(p_max))) throw ConfigError("p_max", "must be positive");
  if (!(initial_p >= 0.0 && initial_p <= upper_bound())) throw ConfigError("initial_p", "must lie in [0, p_max + alpha]");
}

double ControllerConfig::step_size(std::uint64_t t) const {
  return step_rule == StepRule::fixed ? fixed_step : step_c / std::sqrt(static_cast<double>(t));
}

ControllerState step(const ControllerState& state, int observed_y, const ControllerConfig& config) {
  if (observed_y != 0 && observed_y != 1) throw DomainError("observed outcome must be 0 or 1");
  const double g = config.target_alpha - observed_y;
  const double next = state.p - config.step_size(state.t) * g;
  return {state.t + 1, std::clamp(next, 0.0, config.upper_bound())};
}

PenaltyController::PenaltyController(ControllerConfig config) : config_(config) {
  config_.validate();
  state_.p = config_.initial_p;
}

double PenaltyController::observe(int exercised) {
  state_ = step(state_, exercised, config_);
  return state_.p;
}

ProbabilityEnvironment gaussian_environment(double c, double s) {
  if (!(s > 0.0)) throw ConfigError("s", "must be positive");
  return ProbabilityEnvironment([c, s](std::uint64_t, double p) { return normal_cdf((c - p) / s); },
                                [](std::uint64_t) { return std::uint64_t{0}; });
}

ProbabilityEnvironment piecewise_gaussian_environment(std::vector<GaussianSegment> segments) {
  if (segments.empty()) throw ConfigError("segments", "must not be empty");
  std::sort(segments.begin(), segments.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (const auto& seg : segments)
    if (!(seg.s > 0.0)) throw ConfigError("segments.s", "must be positive");
  auto index = [segments](std::uint64_t t) -> std::uint64_t {
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](std::uint64_t v, const auto& g) { return v < g.start; });
    return it == segments.begin() ? 0 : static_cast<std::uint64_t>(std::prev(it) - segments.begin());
  };
  return ProbabilityEnvironment(
      [segments, index](std::uint64_t t, double p) {
        const GaussianSegment& g = segments[index(t)];
        return normal_cdf((g.c - p) / g.s);
      },
      index);
}

double oracle_policy(const std::function<double(double)>& q, double alpha, double p_max) {
  double prev = q(0.0);
  for (int k = 1; k <= kMonotoneProbes; ++k) {
    const double p = p_max * k / kMonotoneProbes;
    const double v = q(p);
    if (v > prev + kMonotoneTol)
      throw ModelViolationError("exercise probability increases with the penalty near p = " + std::to_string(p));
    prev = v;
  }
  if (q(0.0) <= alpha) return 0.0;
  if (q(p_max) > alpha) throw ModelViolationError("exercise probability at p_max exceeds the target");
  double lo = 0.0, hi = p_max;  // q(lo) > alpha >= q(hi)
  while (hi - lo > kBisectionTol) {
    const double mid = 0.5 * (lo + hi);
    (q(mid) <= alpha ? hi : lo) = mid;
  }
  return hi;
}

ControlRun run_controlled(Environment& env, const ControllerConfig& config, std::uint64_t T, std::uint64_t seed,
                          bool keep_trace) {
  PenaltyController controller(config);
  const CounterRng rng(seed, kOutcomeStream);
  const double alpha = config.target_alpha;
  if (auto h = env.horizon()) T = std::min(T, *h);

  ControlRun run;
  if (keep_trace) run.trace.reserve(T);
  RegretReport& r = run.report;
  bool q_known = true;
  long double regret = 0.0L, violation = 0.0L, path = 1.0L, gap = 0.0L, penalty_sum = 0.0L;
  std::uint64_t exercises = 0;
  std::optional<double> prev_star;
  std::optional<std::uint64_t> star_curve;

  for (std::uint64_t t = 1; t <= T; ++t) {
    const double p = controller.penalty();
    const std::optional<double> q = env.exercise_probability(t, p);
    std::optional<double> p_star;
    if (q) {
      const std::uint64_t id = env.curve_id(t);
      if (star_curve == id) {
        p_star = prev_star;
      } else {
        p_star = oracle_policy([&](double x) { return *env.exercise_probability(t, x); }, alpha, config.p_max);
        star_curve = id;
      }
      regret += p - *p_star;
      violation += std::max(0.0, *q - alpha);
      if (prev_star) path += std::abs(*p_star - *prev_star);
      prev_star = p_star;
    } else {
      q_known = false;
    }
    const int y = env.outcome(t, p, rng.uniform(t));
    if (q) gap += y - *q;
    exercises += static_cast<std::uint64_t>(y);
    penalty_sum += p;
    if (keep_trace) run.trace.push_back({t, p, y, q, p_star});
    controller.observe(y);
  }

  r.rounds = T;
  if (T > 0) {
    r.avg_penalty = static_cast<double>(penalty_sum / T);
    r.avg_exercise_rate = static_cast<double>(exercises) / static_cast<double>(T);
  }
  r.LC_T = std::max(0.0, static_cast<double>(exercises) - alpha * static_cast<double>(T));
  if (q_known && T > 0) {
    r.R_T = static_cast<double>(regret);
    r.C_T = static_cast<double>(violation);
    r.path_length_P_star = static_cast<double>(path);
    r.martingale_gap = static_cast<double>(gap);
  }
  return run;
}

}  // namespace freeopt
