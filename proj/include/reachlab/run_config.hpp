#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "reachlab/a3c_trainer.hpp"
#include "reachlab/reach_env.hpp"
#include "reachlab/robustness_bench.hpp"

namespace reachlab {

/// Everything one pipeline run needs. Serialized as sectioned key = value
/// text; sections mirror the library modules.
struct RunConfig {
  std::string model_id = "baseline";
  std::filesystem::path output_dir = "runs/baseline";
  std::uint64_t seed = 1;
  EnvConfig env;
  TrainConfig train;
  GridSpec grid;
  int sweep_threads = 1;
  bool sweep_greedy = true;

  static RunConfig baseline();
  static RunConfig randomized();
};

/// Config error carrying the 1-based line it refers to (0 when not line-bound).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_ini(const RunConfig& config);

/// Sets one `section.key` entry using the same parser as the file format.
void apply_override(RunConfig& config, std::string_view section, std::string_view key,
                    std::string_view value, const std::string& source = "<override>");

/// Applies every REACHLAB_<SECTION>__<KEY> variable found in the environment.
/// Returns the number applied.
int apply_env_overrides(RunConfig& config, std::string_view prefix = "REACHLAB_");

/// Parses "az_min:az_max:step,el_min:el_max:step" into the grid axes.
void parse_grid_flag(std::string_view text, GridSpec& grid);

}  // namespace reachlab
