// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "freeopt/freeopt.h"

namespace {

// Exit codes: 0 success, 1 usage, otherwise 10 + freeopt_status.
int exit_code(freeopt_status s) { return s == FREEOPT_OK ? 0 : 10 + static_cast<int>(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freeopt: numerical lab for the builder free option under ePBS"};
  app.set_version_flag("--version", std::string(freeopt_version()));
  app.require_subcommand(1);

  std::string config, out, windows, penalties, data;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 0;
  const char* env_out = std::getenv("FREEOPT_OUT_DIR");

  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"solve", "solve one builder sizing problem"},
      {"simulate", "simulate slots for one window and penalty"},
      {"sweep", "window x penalty matrix over a shared market path"},
      {"replay", "value recorded blocks and run the mitigation counterfactuals"},
      {"control", "run the dynamic penalty controller"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config,-c", config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out, "output directory (default $FREEOPT_OUT_DIR or ./freeopt_out)");
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--jobs,-j", jobs, "worker threads for parallel stages (0 = all cores)");
    sub->add_option("--windows", windows, "comma-separated window grid override, seconds");
    sub->add_option("--penalties", penalties, "comma-separated penalty grid override, ETH");
    if (std::string(c.name) == "replay" || std::string(c.name) == "control")
      sub->add_option("--data", data, "dataset directory with blocks.csv, trades.csv, quotes.csv")
          ->check(CLI::ExistingDirectory);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  if (out.empty()) out = env_out && *env_out ? env_out : "freeopt_out";

  freeopt_command cmd{};
  cmd.subcommand = sub.c_str();
  cmd.config_path = config.empty() ? nullptr : config.c_str();
  cmd.out_dir = out.c_str();
  cmd.has_seed = seed.has_value();
  cmd.seed = seed.value_or(0);
  cmd.jobs = jobs;
  cmd.windows = windows.empty() ? nullptr : windows.c_str();
  cmd.penalties = penalties.empty() ? nullptr : penalties.c_str();
  cmd.data_dir = data.empty() ? nullptr : data.c_str();

  freeopt_report* report = nullptr;
  const freeopt_status s = freeopt_command_run(&cmd, &report);
  if (s != FREEOPT_OK) {
    const char* field = freeopt_last_error_field();
    std::fprintf(stderr, "freeopt %s: %s: %s\n", sub.c_str(), freeopt_status_name(s), freeopt_last_error());
    if (field && *field) std::fprintf(stderr, "  field: %s\n", field);
    return exit_code(s);
  }
  std::fputs(freeopt_report_summary(report), stdout);
  const size_t n_warn = freeopt_report_warning_count(report);
  if (n_warn) {
    std::fprintf(stderr, "warnings (%zu):\n", n_warn);
    for (size_t i = 0; i < n_warn; ++i) std::fprintf(stderr, "  %s\n", freeopt_report_warning(report, i));
  }
  std::printf("wrote %zu file(s) to %s\n", freeopt_report_output_count(report), out.c_str());
  freeopt_report_destroy(report);
  return 0;
}
