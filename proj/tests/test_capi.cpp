#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <thread>

#include "freeopt/freeopt.h"

namespace fs = std::filesystem;

namespace {

const std::string kCaseStudy = std::string(FREEOPT_FIXTURES) + "/case_study";

freeopt_problem_params example() {
  freeopt_problem_params p;
  freeopt_problem_params_default(&p);
  p.liquidity_L = 1e6;
  p.volatility_sigma = 1e-4;
  p.window_tau = 8.0;
  return p;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(freeopt_version()) > 0);
  CHECK(std::string(freeopt_status_name(FREEOPT_ERR_CONFIG)) == "config error");
  CHECK(std::string(freeopt_status_name(static_cast<freeopt_status>(99))) == "unknown status");
}

TEST_CASE("solve through the C API") {
  const freeopt_problem_params p = example();
  freeopt_decision d;
  REQUIRE(freeopt_solve(&p, &d) == FREEOPT_OK);
  CHECK(d.optimal_y / (d.sigma_eff * p.liquidity_L) == doctest::Approx(0.6120031809624809).epsilon(1e-6));
  CHECK(d.interior == 1);
  CHECK(d.sigma_eff == doctest::Approx(1e-4 * std::sqrt(8.0)));

  double v = 0;
  REQUIRE(freeopt_objective(&p, d.optimal_y, &v) == FREEOPT_OK);
  CHECK(v == doctest::Approx(d.value_V).epsilon(1e-12));

  freeopt_decision mc;
  REQUIRE(freeopt_solve_mc(&p, 200000, 3, &mc) == FREEOPT_OK);
  CHECK(std::abs(mc.value_V - d.value_V) < 5 * mc.value_se + 1e-4);
  CHECK(freeopt_solve_mc(&p, 10, 3, &mc) == FREEOPT_ERR_CONFIG);
}

TEST_CASE("errors map to status codes with messages") {
  freeopt_problem_params p = example();
  p.volatility_sigma = -1;
  freeopt_decision d;
  CHECK(freeopt_solve(&p, &d) == FREEOPT_ERR_CONFIG);
  CHECK(std::string(freeopt_last_error_field()) == "returns.volatility_sigma");
  CHECK(std::string(freeopt_last_error()).find("volatility_sigma") != std::string::npos);

  p = example();
  p.side = 7;
  CHECK(freeopt_solve(&p, &d) == FREEOPT_ERR_INVALID_ARGUMENT);
  CHECK(freeopt_solve(nullptr, &d) == FREEOPT_ERR_INVALID_ARGUMENT);
  CHECK(freeopt_solve(&p, nullptr) == FREEOPT_ERR_INVALID_ARGUMENT);

  // A success clears the previous error.
  p = example();
  REQUIRE(freeopt_solve(&p, &d) == FREEOPT_OK);
  CHECK(std::string(freeopt_last_error()).empty());

  // Errors are per thread.
  std::string other;
  std::thread([&] {
    freeopt_problem_params q = example();
    q.window_tau = 0;
    freeopt_decision e;
    freeopt_solve(&q, &e);
    other = freeopt_last_error_field();
  }).join();
  CHECK(other == "window_tau");
  CHECK(std::string(freeopt_last_error_field()).empty());
}

TEST_CASE("controller handle") {
  freeopt_controller_params cp;
  freeopt_controller_params_default(&cp);
  cp.step_rule = FREEOPT_STEP_FIXED;
  cp.fixed_step = 0.1;
  cp.target_alpha = 0.2;
  freeopt_controller* c = nullptr;
  REQUIRE(freeopt_controller_create(&cp, &c) == FREEOPT_OK);
  double p = -1;
  REQUIRE(freeopt_controller_penalty(c, &p) == FREEOPT_OK);
  CHECK(p == 0.0);
  REQUIRE(freeopt_controller_observe(c, 1, &p) == FREEOPT_OK);
  CHECK(p == doctest::Approx(0.08));  // 0 - 0.1 (0.2 - 1)
  REQUIRE(freeopt_controller_observe(c, 0, &p) == FREEOPT_OK);
  CHECK(p == doctest::Approx(0.06));
  CHECK(freeopt_controller_observe(c, 2, &p) == FREEOPT_ERR_DOMAIN);
  freeopt_controller_destroy(c);
  freeopt_controller_destroy(nullptr);

  cp.target_alpha = 2;
  CHECK(freeopt_controller_create(&cp, &c) == FREEOPT_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(freeopt_last_error_field()) == "target_alpha");
}

TEST_CASE("dataset handle") {
  freeopt_dataset* ds = nullptr;
  REQUIRE(freeopt_dataset_open(kCaseStudy.c_str(), &ds) == FREEOPT_OK);
  size_t n = 0;
  REQUIRE(freeopt_dataset_block_count(ds, &n) == FREEOPT_OK);
  CHECK(n == 1);
  REQUIRE(freeopt_dataset_diagnostic_count(ds, &n) == FREEOPT_OK);
  CHECK(n == 0);
  double v = 0;
  int ok = 0;
  REQUIRE(freeopt_dataset_block_value(ds, 0, 0.0, 0.0001725, &v, &ok) == FREEOPT_OK);
  CHECK(ok == 1);
  CHECK(std::abs(v - 0.0581) <= 0.001);
  REQUIRE(freeopt_dataset_block_value(ds, 0, 8.0, 0.0001725, &v, &ok) == FREEOPT_OK);
  CHECK(std::abs(-v - 0.064) <= 0.001);
  REQUIRE(freeopt_dataset_block_value(ds, 0, 60.0, 0.0001725, &v, &ok) == FREEOPT_OK);
  CHECK(ok == 0);  // quotes are stale a minute later
  CHECK(freeopt_dataset_block_value(ds, 1, 0.0, 0.0, &v, &ok) == FREEOPT_ERR_INVALID_ARGUMENT);
  CHECK(freeopt_dataset_block_value(ds, 0, -1.0, 0.0, &v, &ok) == FREEOPT_ERR_DOMAIN);
  freeopt_dataset_destroy(ds);

  CHECK(freeopt_dataset_open("/nonexistent/dir", &ds) == FREEOPT_ERR_IO);
  CHECK(ds == nullptr);
}

TEST_CASE("run a subcommand") {
  const fs::path out = fs::temp_directory_path() / "freeopt_test_capi_replay";
  fs::remove_all(out);
  freeopt_command cmd{};
  cmd.subcommand = "replay";
  cmd.data_dir = kCaseStudy.c_str();
  const std::string out_s = out.string();
  cmd.out_dir = out_s.c_str();
  cmd.windows = "4,8";
  cmd.penalties = "0";
  freeopt_report* r = nullptr;
  REQUIRE(freeopt_command_run(&cmd, &r) == FREEOPT_OK);
  CHECK(std::string(freeopt_report_summary(r)).find("replay: 1 block rows") != std::string::npos);
  CHECK(freeopt_report_warning_count(r) == 0);
  const size_t n = freeopt_report_output_count(r);
  REQUIRE(n > 1);
  CHECK(std::string(freeopt_report_output(r, n - 1)) == "manifest.json");
  CHECK(freeopt_report_output(r, n) == nullptr);
  for (size_t i = 0; i < n; ++i) CHECK(fs::exists(out / freeopt_report_output(r, i)));
  freeopt_report_destroy(r);

  cmd.windows = "4,x";
  CHECK(freeopt_command_run(&cmd, &r) == FREEOPT_ERR_CONFIG);
  CHECK(r == nullptr);
  CHECK(std::string(freeopt_last_error_field()) == "--windows[1]");
  cmd.windows = nullptr;
  cmd.subcommand = "bogus";
  CHECK(freeopt_command_run(&cmd, &r) == FREEOPT_ERR_CONFIG);
  cmd.subcommand = nullptr;
  CHECK(freeopt_command_run(&cmd, &r) == FREEOPT_ERR_INVALID_ARGUMENT);
  freeopt_report_destroy(nullptr);
}
