#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freeopt/builder_option.hpp"
#include "freeopt/penalty_controller.hpp"
#include "freeopt/replay.hpp"
#include "freeopt/slot_sim.hpp"

namespace freeopt {

// Run configuration documents are JSON objects with "schema_version": 1 and
// one section per subcommand ("solve", "scenario", "simulate", "replay",
// "control"). Unknown keys are rejected; every error is a ConfigError whose
// field is the dotted path into the document, e.g.
// "solve.problem.returns.volatility_sigma".
inline constexpr int config_schema_version = 1;

enum class SolveMethod { closed_form, monte_carlo };

struct SolveSpec {
  BuilderProblem problem;
  SolveMethod method = SolveMethod::closed_form;
  std::size_t mc_samples = 1'000'000;
  std::uint64_t seed = 1;
};

// One grid cell of the scenario, reported slot by slot.
struct SimulateSpec {
  double window = 8.0;
  double penalty = 0.0;
  bool export_dataset = false;  // also write the committed blocks in the replay schema
};

struct DatasetPaths {
  std::filesystem::path blocks;
  std::filesystem::path trades;
  std::filesystem::path quotes;
};

struct ReplaySpec {
  DatasetPaths data;
  ReplayConfig replay;
  std::vector<double> windows{2.0, 4.0, 6.0, 8.0};
  std::vector<double> penalties{0.0, 0.075, 0.15, 0.5};
  bool trailing = false;
  double heterogeneity_window = 8.0;
  double heterogeneity_penalty = 0.0;
};

enum class EnvironmentKind { gaussian, piecewise, replay };

struct EnvironmentSpec {
  EnvironmentKind kind = EnvironmentKind::gaussian;
  double c = 0.3;  // gaussian: q(p) = Phi((c - p) / s)
  double s = 0.05;
  std::vector<GaussianSegment> segments;  // piecewise
  // replay: blocks in slot order, exercised iff Pi_b(window) + carry < -p
  DatasetPaths data;
  ReplayConfig replay;
  double window = 8.0;
  bool trailing = false;
};

struct ControlSpec {
  ControllerConfig controller;
  EnvironmentSpec environment;
  std::uint64_t rounds = 100'000;
  std::uint64_t seed = 1;
  std::uint64_t trace_stride = 1;  // write every k-th round of the trace
};

// Parsed document. Relative dataset paths are resolved against the
// directory of the config file.
struct RunConfig {
  std::filesystem::path source;
  std::optional<SolveSpec> solve;
  std::optional<ScenarioConfig> scenario;
  SimulateSpec simulate;
  std::optional<ReplaySpec> replay;
  std::optional<ControlSpec> control;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

// Comma-separated list of non-negative numbers, e.g. "2,4,6,8".
std::vector<double> parse_grid(const std::string& text, const std::string& field);

}  // namespace freeopt
