#include "freeopt/freeopt.h"

#include <exception>
#include <new>
#include <string>
#include <vector>

#include "freeopt/builder_option.hpp"
#include "freeopt/commands.hpp"
#include "freeopt/config.hpp"
#include "freeopt/errors.hpp"
#include "freeopt/penalty_controller.hpp"
#include "freeopt/replay.hpp"

struct freeopt_controller {
  freeopt::PenaltyController impl;
};

struct freeopt_dataset {
  freeopt::Dataset data;
};

struct freeopt_report {
  freeopt::CommandResult result;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_field;

freeopt_status fail(freeopt_status s, const std::string& message, const std::string& field = {}) {
  last_error = message;
  last_field = field;
  return s;
}

struct InvalidArgument {
  const char* what;
};

// Runs f, translating exceptions into status codes.
template <class F>
freeopt_status guarded(F&& f) noexcept {
  last_error.clear();
  last_field.clear();
  try {
    f();
    return FREEOPT_OK;
  } catch (const InvalidArgument& e) {
    return fail(FREEOPT_ERR_INVALID_ARGUMENT, e.what);
  } catch (const freeopt::ConfigError& e) {
    return fail(FREEOPT_ERR_CONFIG, e.what(), e.field());
  } catch (const freeopt::Error& e) {
    return fail(static_cast<freeopt_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FREEOPT_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(FREEOPT_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(FREEOPT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FREEOPT_ERR_INTERNAL, "unknown error");
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) throw InvalidArgument{what};
}

freeopt::BuilderProblem to_problem(const freeopt_problem_params* p) {
  need(p, "params is NULL");
  if (p->side != FREEOPT_BUY && p->side != FREEOPT_SELL) throw InvalidArgument{"side must be FREEOPT_BUY or FREEOPT_SELL"};
  if (p->cost_model != FREEOPT_COST_QUADRATIC && p->cost_model != FREEOPT_COST_CPMM)
    throw InvalidArgument{"unknown cost model"};
  freeopt::BuilderProblem bp;
  bp.atomic_mev_mu = p->atomic_mev_mu;
  bp.pool.liquidity_L = p->liquidity_L;
  bp.pool.cex_price_P0 = p->cex_price_P0;
  bp.pool.price_gap_delta = p->price_gap_delta;
  bp.pool.side = p->side == FREEOPT_BUY ? freeopt::TradeSide::buy : freeopt::TradeSide::sell;
  bp.pool.cost_model = p->cost_model == FREEOPT_COST_QUADRATIC ? freeopt::CostModel::quadratic : freeopt::CostModel::cpmm;
  bp.returns = freeopt::ReturnModel::normal(p->volatility_sigma);
  bp.window_tau = p->window_tau;
  bp.penalty_p = p->penalty_p;
  bp.time_scaling_exponent = p->time_scaling_exponent;
  bp.validate();
  return bp;
}

void from_decision(const freeopt::OptionDecision& d, freeopt_decision* out) {
  *out = {d.optimal_y,      d.value_V,   d.exercise_prob_P, d.net_option_value,      d.z_star,     d.post_trade_overshoot,
          d.no_option_value, d.sigma_eff, d.value_se,        d.stationarity_residual, d.iterations, d.interior ? 1 : 0};
}

}  // namespace

extern "C" {

const char* freeopt_version(void) { return FREEOPT_VERSION; }

const char* freeopt_status_name(freeopt_status status) {
  switch (status) {
    case FREEOPT_OK: return "ok";
    case FREEOPT_ERR_DOMAIN: return "domain error";
    case FREEOPT_ERR_CONFIG: return "config error";
    case FREEOPT_ERR_NUMERICAL: return "numerical error";
    case FREEOPT_ERR_UNSUPPORTED_MODEL: return "unsupported model";
    case FREEOPT_ERR_DATA: return "data error";
    case FREEOPT_ERR_IO: return "i/o error";
    case FREEOPT_ERR_MODEL_VIOLATION: return "model violation";
    case FREEOPT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FREEOPT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* freeopt_last_error(void) { return last_error.c_str(); }
const char* freeopt_last_error_field(void) { return last_field.c_str(); }

void freeopt_problem_params_default(freeopt_problem_params* p) {
  if (!p) return;
  const freeopt::BuilderProblem bp;
  *p = {bp.atomic_mev_mu,
        bp.pool.liquidity_L,
        bp.pool.cex_price_P0,
        bp.pool.price_gap_delta,
        FREEOPT_BUY,
        FREEOPT_COST_QUADRATIC,
        0.0,
        bp.window_tau,
        bp.penalty_p,
        bp.time_scaling_exponent};
}

freeopt_status freeopt_solve(const freeopt_problem_params* params, freeopt_decision* out) {
  return guarded([&] {
    need(out, "out is NULL");
    from_decision(freeopt::solve(to_problem(params)), out);
  });
}

freeopt_status freeopt_solve_mc(const freeopt_problem_params* params, uint64_t n_samples, uint64_t seed,
                                freeopt_decision* out) {
  return guarded([&] {
    need(out, "out is NULL");
    from_decision(freeopt::solve_mc(to_problem(params), n_samples, seed), out);
  });
}

freeopt_status freeopt_objective(const freeopt_problem_params* params, double y, double* out) {
  return guarded([&] {
    need(out, "out is NULL");
    *out = freeopt::objective_closed_form(to_problem(params), y);
  });
}

void freeopt_controller_params_default(freeopt_controller_params* p) {
  if (!p) return;
  const freeopt::ControllerConfig c;
  *p = {c.target_alpha, FREEOPT_STEP_DECAYING, c.step_c, c.fixed_step, c.p_max, c.initial_p};
}

freeopt_status freeopt_controller_create(const freeopt_controller_params* params, freeopt_controller** out) {
  return guarded([&] {
    need(params, "params is NULL");
    need(out, "out is NULL");
    *out = nullptr;
    if (params->step_rule != FREEOPT_STEP_DECAYING && params->step_rule != FREEOPT_STEP_FIXED)
      throw InvalidArgument{"unknown step rule"};
    freeopt::ControllerConfig c;
    c.target_alpha = params->target_alpha;
    c.step_rule = params->step_rule == FREEOPT_STEP_DECAYING ? freeopt::StepRule::decaying : freeopt::StepRule::fixed;
    c.step_c = params->step_c;
    c.fixed_step = params->fixed_step;
    c.p_max = params->p_max;
    c.initial_p = params->initial_p;
    *out = new freeopt_controller{freeopt::PenaltyController(c)};
  });
}

void freeopt_controller_destroy(freeopt_controller* controller) { delete controller; }

freeopt_status freeopt_controller_penalty(const freeopt_controller* controller, double* out) {
  return guarded([&] {
    need(controller, "controller is NULL");
    need(out, "out is NULL");
    *out = controller->impl.penalty();
  });
}

freeopt_status freeopt_controller_observe(freeopt_controller* controller, int exercised, double* next_penalty) {
  return guarded([&] {
    need(controller, "controller is NULL");
    const double p = controller->impl.observe(exercised);
    if (next_penalty) *next_penalty = p;
  });
}

freeopt_status freeopt_dataset_open(const char* dir, freeopt_dataset** out) {
  return guarded([&] {
    need(dir, "dir is NULL");
    need(out, "out is NULL");
    *out = nullptr;
    *out = new freeopt_dataset{freeopt::read_dataset(dir)};
  });
}

void freeopt_dataset_destroy(freeopt_dataset* dataset) { delete dataset; }

freeopt_status freeopt_dataset_block_count(const freeopt_dataset* dataset, size_t* out) {
  return guarded([&] {
    need(dataset, "dataset is NULL");
    need(out, "out is NULL");
    *out = dataset->data.blocks.size();
  });
}

freeopt_status freeopt_dataset_diagnostic_count(const freeopt_dataset* dataset, size_t* out) {
  return guarded([&] {
    need(dataset, "dataset is NULL");
    need(out, "out is NULL");
    *out = dataset->data.diagnostics.size();
  });
}

freeopt_status freeopt_dataset_block_value(const freeopt_dataset* dataset, size_t index, double seconds,
                                           double taker_fee_rate, double* value, int* markable) {
  return guarded([&] {
    need(dataset, "dataset is NULL");
    need(value, "value is NULL");
    need(markable, "markable is NULL");
    if (index >= dataset->data.blocks.size()) throw InvalidArgument{"block index out of range"};
    if (!(seconds >= 0.0)) throw freeopt::DomainError("seconds must be non-negative");
    freeopt::ReplayConfig rc;
    rc.taker_fee_rate = taker_fee_rate;
    rc.validate();
    const auto v = freeopt::block_value_at(dataset->data.blocks[index], dataset->data, seconds, rc);
    *markable = v ? 1 : 0;
    if (v) *value = *v;
  });
}

freeopt_status freeopt_command_run(const freeopt_command* command, freeopt_report** out) {
  return guarded([&] {
    need(command, "command is NULL");
    need(out, "out is NULL");
    *out = nullptr;
    need(command->subcommand, "subcommand is NULL");
    need(command->out_dir, "out_dir is NULL");
    freeopt::CommandOptions o;
    o.subcommand = command->subcommand;
    if (command->config_path) o.config_path = command->config_path;
    o.out_dir = command->out_dir;
    if (command->has_seed) o.seed = command->seed;
    o.jobs = command->jobs;
    if (command->windows) o.windows = freeopt::parse_grid(command->windows, "--windows");
    if (command->penalties) o.penalties = freeopt::parse_grid(command->penalties, "--penalties");
    if (command->data_dir) o.data_dir = command->data_dir;
    *out = new freeopt_report{freeopt::run_command(o)};
  });
}

void freeopt_report_destroy(freeopt_report* report) { delete report; }

const char* freeopt_report_summary(const freeopt_report* report) {
  return report ? report->result.summary.c_str() : "";
}

size_t freeopt_report_warning_count(const freeopt_report* report) {
  return report ? report->result.warnings.size() : 0;
}

const char* freeopt_report_warning(const freeopt_report* report, size_t index) {
  if (!report || index >= report->result.warnings.size()) return nullptr;
  return report->result.warnings[index].c_str();
}

size_t freeopt_report_output_count(const freeopt_report* report) { return report ? report->result.outputs.size() : 0; }

const char* freeopt_report_output(const freeopt_report* report, size_t index) {
  if (!report || index >= report->result.outputs.size()) return nullptr;
  return report->result.outputs[index].c_str();
}

}  // extern "C"
