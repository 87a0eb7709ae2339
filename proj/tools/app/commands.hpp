#pragma once

// The dirsurf subcommands. `run_cli` is the whole program minus process
// setup, so tests and the acceptance runner can drive it in-process.

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace dirsurf::app {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

inline constexpr const char* kOutputRootEnv = "DIRSURF_OUTPUT_ROOT";

/// Relative paths land under $DIRSURF_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& requested);

/// `args` excludes the program name. Errors are reported on `err` and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Values swept by `ablate` for each axis.
std::vector<std::string> ablation_values(const std::string& axis);

/// Applies one ablation point to a config document.
void apply_ablation(nlohmann::json& config, const std::string& axis, const std::string& value);

struct TrainSummary {
  train::SurfaceMetrics surface;
  train::StepMetrics last;
  int final_step = 0;
  bool complete = false;
};

/// Trains per `cfg` into `out_dir` (metrics, checkpoints, extracted surface,
/// resolved config, manifest). Used by `train` and `ablate`.
TrainSummary run_training(const RunConfig& cfg, const std::filesystem::path& out_dir, int workers, int stop_after,
                          const std::optional<std::filesystem::path>& resume, std::ostream* progress);

}  // namespace dirsurf::app
