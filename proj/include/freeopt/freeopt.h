/* C interface to the freeopt library.
 *
 * Every function returns a freeopt_status. On failure the message (and, for
 * configuration errors, the offending field path) is available from
 * freeopt_last_error() / freeopt_last_error_field() on the calling thread
 * until the next call into the library from that thread.
 *
 * Objects are opaque handles created by *_create / *_open functions and
 * released with the matching *_destroy. Destroy functions accept NULL.
 * Strings returned by the library are owned by it and stay valid until the
 * owning handle is destroyed (or, for error strings, until the next call).
 */
#ifndef FREEOPT_FREEOPT_H
#define FREEOPT_FREEOPT_H

#include <stddef.h>
#include <stdint.h>

#if defined(FREEOPT_BUILDING_LIBRARY)
#define FREEOPT_API __attribute__((visibility("default")))
#else
#define FREEOPT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum freeopt_status {
  FREEOPT_OK = 0,
  FREEOPT_ERR_DOMAIN = 1,            /* argument outside the model's domain */
  FREEOPT_ERR_CONFIG = 2,            /* invalid configuration; see the field path */
  FREEOPT_ERR_NUMERICAL = 3,         /* solver did not converge */
  FREEOPT_ERR_UNSUPPORTED_MODEL = 4, /* e.g. closed form on non-normal returns */
  FREEOPT_ERR_DATA = 5,              /* malformed input data */
  FREEOPT_ERR_IO = 6,
  FREEOPT_ERR_MODEL_VIOLATION = 7,   /* environment breaks a modelling assumption */
  FREEOPT_ERR_INVALID_ARGUMENT = 8,  /* NULL pointer, bad enum, index out of range */
  FREEOPT_ERR_INTERNAL = 9
} freeopt_status;

FREEOPT_API const char* freeopt_version(void);
FREEOPT_API const char* freeopt_status_name(freeopt_status status);
FREEOPT_API const char* freeopt_last_error(void);
FREEOPT_API const char* freeopt_last_error_field(void);

/* ---- Builder option problem (normal returns) ---------------------------- */

typedef enum freeopt_side { FREEOPT_BUY = 0, FREEOPT_SELL = 1 } freeopt_side;
typedef enum freeopt_cost_model { FREEOPT_COST_QUADRATIC = 0, FREEOPT_COST_CPMM = 1 } freeopt_cost_model;

typedef struct freeopt_problem_params {
  double atomic_mev_mu;         /* numeraire */
  double liquidity_L;           /* numeraire */
  double cex_price_P0;          /* numeraire per risky unit */
  double price_gap_delta;       /* (P0 - P'_DEX(0)) / P0 */
  int side;                     /* freeopt_side */
  int cost_model;               /* freeopt_cost_model */
  double volatility_sigma;      /* per-second return volatility */
  double window_tau;            /* seconds */
  double penalty_p;             /* numeraire */
  double time_scaling_exponent; /* sigma_eff = sigma tau^s, s in [0.5, 1] */
} freeopt_problem_params;

typedef struct freeopt_decision {
  double optimal_y;
  double value_V;
  double exercise_prob_P;
  double net_option_value;
  double z_star;
  double post_trade_overshoot;
  double no_option_value;
  double sigma_eff;
  double value_se;
  double stationarity_residual;
  int iterations;
  int interior;
} freeopt_decision;

FREEOPT_API void freeopt_problem_params_default(freeopt_problem_params* params);
FREEOPT_API freeopt_status freeopt_solve(const freeopt_problem_params* params, freeopt_decision* out);
FREEOPT_API freeopt_status freeopt_solve_mc(const freeopt_problem_params* params, uint64_t n_samples, uint64_t seed,
                                            freeopt_decision* out);
/* E[max{-p, Pi_tau(y)}] at a given position. */
FREEOPT_API freeopt_status freeopt_objective(const freeopt_problem_params* params, double y, double* out);

/* ---- Penalty controller ------------------------------------------------- */

typedef struct freeopt_controller freeopt_controller;

typedef enum freeopt_step_rule { FREEOPT_STEP_DECAYING = 0, FREEOPT_STEP_FIXED = 1 } freeopt_step_rule;

typedef struct freeopt_controller_params {
  double target_alpha;
  int step_rule;     /* freeopt_step_rule */
  double step_c;     /* decaying: eta_t = c / sqrt(t) */
  double fixed_step; /* fixed: eta_t = fixed_step */
  double p_max;
  double initial_p;
} freeopt_controller_params;

FREEOPT_API void freeopt_controller_params_default(freeopt_controller_params* params);
FREEOPT_API freeopt_status freeopt_controller_create(const freeopt_controller_params* params,
                                                     freeopt_controller** out);
FREEOPT_API void freeopt_controller_destroy(freeopt_controller* controller);
FREEOPT_API freeopt_status freeopt_controller_penalty(const freeopt_controller* controller, double* out);
/* Records the outcome (0 or 1) for the current round and returns the next penalty. */
FREEOPT_API freeopt_status freeopt_controller_observe(freeopt_controller* controller, int exercised,
                                                      double* next_penalty);

/* ---- Replay datasets ---------------------------------------------------- */

typedef struct freeopt_dataset freeopt_dataset;

/* Reads blocks.csv, trades.csv and quotes.csv from a directory. Rejected rows
 * do not fail the call; their diagnostics are counted. */
FREEOPT_API freeopt_status freeopt_dataset_open(const char* dir, freeopt_dataset** out);
FREEOPT_API void freeopt_dataset_destroy(freeopt_dataset* dataset);
FREEOPT_API freeopt_status freeopt_dataset_block_count(const freeopt_dataset* dataset, size_t* out);
FREEOPT_API freeopt_status freeopt_dataset_diagnostic_count(const freeopt_dataset* dataset, size_t* out);
/* Pi_b(t) of the block at `index` (slot order) under the default replay
 * settings and the given taker fee rate. *markable is 0 when a quote is
 * missing or stale, in which case *value is left untouched. */
FREEOPT_API freeopt_status freeopt_dataset_block_value(const freeopt_dataset* dataset, size_t index, double seconds,
                                                       double taker_fee_rate, double* value, int* markable);

/* ---- Subcommands -------------------------------------------------------- */

typedef struct freeopt_command {
  const char* subcommand;  /* solve | simulate | sweep | replay | control */
  const char* config_path; /* may be NULL for replay with data_dir */
  const char* out_dir;
  int has_seed;
  uint64_t seed;
  unsigned jobs;           /* 0: all hardware threads */
  const char* windows;     /* comma-separated override or NULL */
  const char* penalties;   /* comma-separated override or NULL */
  const char* data_dir;    /* replay dataset override or NULL */
} freeopt_command;

typedef struct freeopt_report freeopt_report;

FREEOPT_API freeopt_status freeopt_command_run(const freeopt_command* command, freeopt_report** out);
FREEOPT_API void freeopt_report_destroy(freeopt_report* report);
FREEOPT_API const char* freeopt_report_summary(const freeopt_report* report);
FREEOPT_API size_t freeopt_report_warning_count(const freeopt_report* report);
FREEOPT_API const char* freeopt_report_warning(const freeopt_report* report, size_t index);
FREEOPT_API size_t freeopt_report_output_count(const freeopt_report* report);
FREEOPT_API const char* freeopt_report_output(const freeopt_report* report, size_t index);

#ifdef __cplusplus
}
#endif

#endif
