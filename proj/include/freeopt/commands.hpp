#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace freeopt {

// One invocation of a subcommand: solve, simulate, sweep, replay or control.
struct CommandOptions {
  std::string subcommand;
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;              // overrides the section's seed
  unsigned jobs = 0;                              // 0: all hardware threads
  std::optional<std::vector<double>> windows;     // grid overrides, seconds
  std::optional<std::vector<double>> penalties;   // ETH
  std::optional<std::filesystem::path> data_dir;  // replay dataset override
};

struct CommandResult {
  std::string summary;                  // human-readable digest of the reports
  std::vector<std::string> warnings;    // data-quality notes; the run still succeeded
  std::vector<std::string> outputs;     // report files, relative to out_dir, manifest last
};

// Validates the config, runs the subcommand and writes its reports plus
// manifest.json into out_dir. Throws freeopt::Error subclasses on failure.
CommandResult run_command(const CommandOptions& options);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace freeopt
