#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace freeopt {

enum class StepRule {
  decaying,  // eta_t = c / sqrt(t)
  fixed,     // eta_t = fixed_step for every t
};

struct ControllerConfig {
  double target_alpha = 0.001;
  StepRule step_rule = StepRule::decaying;
  double step_c = 1.0;
  double fixed_step = 0.011785113019775792;  // 1 / sqrt(7200), one day of slots
  double p_max = 1.0;
  double initial_p = 0.0;

  void validate() const;
  double step_size(std::uint64_t t) const;
  // Upper end of the projection interval, p_max + alpha.
  double upper_bound() const noexcept { return p_max + target_alpha; }
};

struct ControllerState {
  std::uint64_t t = 1;  // index of the next round
  double p = 0.0;
};

// One projected gradient step with g_t = alpha - y_t:
//   p_{t+1} = clamp(p_t - eta_t g_t, 0, p_max + alpha).
ControllerState step(const ControllerState& state, int observed_y, const ControllerConfig& config);

// Online penalty setter. Sees nothing but the one-bit outcome of each round.
class PenaltyController {
 public:
  explicit PenaltyController(ControllerConfig config);

  double penalty() const noexcept { return state_.p; }
  std::uint64_t round() const noexcept { return state_.t; }
  const ControllerConfig& config() const noexcept { return config_; }

  // Records y_t for the current penalty and returns the next penalty.
  double observe(int exercised);

 private:
  ControllerConfig config_;
  ControllerState state_;
};

// Round-t environment faced by the controller. q_t(p) is the exercise
// probability at penalty p; it is known only for synthetic environments.
class Environment {
 public:
  virtual ~Environment() = default;
  // 1 if the builder exercises in round t at penalty p. `u` is a uniform draw
  // on (0, 1) the environment may use for its Bernoulli outcome.
  virtual int outcome(std::uint64_t t, double p, double u) = 0;
  virtual std::optional<double> exercise_probability(std::uint64_t t, double p) const = 0;
  // Rounds available, if the environment is finite.
  virtual std::optional<std::uint64_t> horizon() const { return std::nullopt; }
  // Rounds with equal ids share the same curve q_t, so p*_t is computed once.
  virtual std::uint64_t curve_id(std::uint64_t t) const { return t; }
};

// Environment defined by q_t(p); outcome is 1{u < q_t(p)}.
class ProbabilityEnvironment : public Environment {
 public:
  using Curve = std::function<double(std::uint64_t, double)>;
  using CurveId = std::function<std::uint64_t(std::uint64_t)>;
  explicit ProbabilityEnvironment(Curve q, CurveId id = nullptr) : q_(std::move(q)), id_(std::move(id)) {}
  int outcome(std::uint64_t t, double p, double u) override { return u < q_(t, p) ? 1 : 0; }
  std::optional<double> exercise_probability(std::uint64_t t, double p) const override { return q_(t, p); }
  std::uint64_t curve_id(std::uint64_t t) const override { return id_ ? id_(t) : t; }

 private:
  Curve q_;
  CurveId id_;
};

// q(p) = Phi((c - p) / s): the builder's option value net of the penalty is
// normal with mean c and scale s.
ProbabilityEnvironment gaussian_environment(double c, double s);

struct GaussianSegment {
  std::uint64_t start = 1;  // first round of the segment
  double c = 0.3;
  double s = 0.05;
};
// Gaussian q whose (c, s) jump at the segment starts.
ProbabilityEnvironment piecewise_gaussian_environment(std::vector<GaussianSegment> segments);

// Smallest p in [0, p_max] with q(p) <= alpha, by bisection to 1e-9.
// Throws ModelViolationError if q is not non-increasing or q(p_max) > alpha.
double oracle_policy(const std::function<double(double)>& q, double alpha, double p_max);

struct RegretReport {
  std::uint64_t rounds = 0;
  std::optional<double> R_T;                 // sum of (p_t - p*_t)
  std::optional<double> C_T;                 // sum of [q_t(p_t) - alpha]_+
  double LC_T = 0.0;                         // [sum of (y_t - alpha)]_+
  std::optional<double> path_length_P_star;  // 1 + sum |p*_{t+1} - p*_t|
  double avg_penalty = 0.0;
  double avg_exercise_rate = 0.0;
  // sum of y_t - sum of q_t(p_t), the martingale behind the concentration bound
  std::optional<double> martingale_gap;
};

struct TraceRow {
  std::uint64_t t = 0;
  double p = 0.0;
  int y = 0;
  std::optional<double> q;
  std::optional<double> p_star;
};

struct ControlRun {
  std::vector<TraceRow> trace;
  RegretReport report;
};

// Runs T rounds (fewer if the environment is finite). Regret terms that need
// q_t are reported only when the environment exposes it.
ControlRun run_controlled(Environment& env, const ControllerConfig& config, std::uint64_t T, std::uint64_t seed,
                          bool keep_trace = true);

}  // namespace freeopt
