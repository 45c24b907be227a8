#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reachlab/a3c_trainer.hpp"
#include "reachlab/policy_value_net.hpp"
#include "reachlab/reach_env.hpp"

namespace reachlab {

struct GridSpec {
  double azimuth_min = 140.0;
  double azimuth_max = 220.0;
  double azimuth_step = 5.0;
  double elevation_min = -50.0;
  double elevation_max = -10.0;
  double elevation_step = 5.0;
  int episodes_per_cell = 100;
  double success_tolerance = 0.10;

  static GridSpec full_scale() {
    GridSpec g;
    g.episodes_per_cell = 1000;
    return g;
  }

  /// Throws std::invalid_argument when a step does not divide its range.
  int azimuth_count() const;
  int elevation_count() const;
  int cell_count() const { return azimuth_count() * elevation_count(); }
  bool operator==(const GridSpec&) const = default;
};

/// Camera poses seen during DR training (inclusive bounds).
struct TrainingRegion {
  double azimuth_lo = 160.0, azimuth_hi = 200.0;
  double elevation_lo = -40.0, elevation_hi = -20.0;
  bool contains(double az, double el) const {
    return az >= azimuth_lo && az <= azimuth_hi && el >= elevation_lo && el <= elevation_hi;
  }
};

struct GridPose {
  int az_index = 0;
  int el_index = 0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
};

struct CellResult {
  GridPose pose;
  int successes = 0;
  int failures = 0;
  double accuracy_pct = 0.0;
  std::optional<double> max_failure_dist;
  std::optional<double> mean_failure_dist;
  std::vector<std::uint64_t> episode_seeds;
  bool in_training_region = false;

  int episodes() const { return successes + failures; }
};

struct Provenance {
  std::string model_id;
  std::uint64_t checkpoint_hash = 0;
  std::uint64_t master_seed = 0;
};

/// Row-major over elevation (outer) then azimuth (inner).
struct HeatMapGrid {
  GridSpec spec;
  std::vector<CellResult> cells;
  Provenance provenance;

  const CellResult& at(int az_index, int el_index) const;
};

/// Poses in row-major order: elevation outer, azimuth inner.
std::vector<GridPose> build_grid(const GridSpec& spec);

/// Per-cell seed derived from the master seed and the cell's grid indices.
std::uint64_t cell_seed(std::uint64_t master_seed, int az_index, int el_index);

/// Success ratio in percent. Throws std::invalid_argument for an empty cell.
double accuracy(int successes, int failures);

/// Evaluates `episodes` seeded episodes with the camera fixed at `pose`.
/// Episodes end at the step cap or once the gripper is within `tolerance`.
CellResult run_cell(const NetParams& params, const GridPose& pose, const EnvConfig& env_config,
                    int episodes, double tolerance, std::uint64_t seed, bool greedy = true);

struct SweepOptions {
  int threads = 1;
  bool greedy = true;
  TrainingRegion region;
  /// When set, completed cells are appended here so a failed sweep keeps partial results.
  std::filesystem::path partial_csv;
};

/// Runs every cell of the grid. Cell outcomes do not depend on scheduling.
HeatMapGrid sweep(const NetParams& params, const GridSpec& grid, const EnvConfig& env_config,
                  std::uint64_t master_seed, const SweepOptions& options = {});

/// Episode count a sweep would schedule.
std::int64_t planned_episodes(const GridSpec& grid);

struct IncrementCell {
  GridPose pose;
  double increment_pct = 0.0;
  bool in_training_region = false;
};

struct IncrementGrid {
  GridSpec spec;
  std::vector<IncrementCell> cells;
  double grand_mean = 0.0;
};

/// Cell-wise accuracy difference a - b. Throws std::invalid_argument when the
/// grids do not share a layout.
IncrementGrid compare(const HeatMapGrid& a, const HeatMapGrid& b);

enum class SliceAxis { Azimuth, Elevation };

struct SlicePoint {
  double angle_deg = 0.0;  // the varying coordinate
  double accuracy_pct = 0.0;
  double stddev_pct = 0.0;
  int episodes = 0;
};

/// Profile across the grid with `axis` held at `fixed_value`. Deviation is the
/// Bernoulli standard error 100*sqrt(p(1-p)/n). Throws for off-grid values.
std::vector<SlicePoint> project_slice(const HeatMapGrid& grid, SliceAxis fixed_axis,
                                      double fixed_value);

/// Mean accuracy over cells inside or outside the training region.
double region_mean_accuracy(const HeatMapGrid& grid, bool inside);

inline constexpr std::string_view kHeatMapHeader =
    "azimuth_deg,elevation_deg,accuracy_pct,episodes,max_failure_dist_m,mean_failure_dist_m,"
    "in_training_region";
inline constexpr std::string_view kIncrementHeader =
    "azimuth_deg,elevation_deg,increment_pct,in_training_region";

std::string heatmap_csv_row(const CellResult& cell);
void write_heatmap_csv(const HeatMapGrid& grid, const std::filesystem::path& path);
/// Reconstructs a grid (without per-episode seeds) from an exported CSV.
HeatMapGrid read_heatmap_csv(const std::filesystem::path& path);
void write_increment_csv(const IncrementGrid& grid, const std::filesystem::path& path);
void write_heatmap_json(const HeatMapGrid& grid, const std::filesystem::path& path);

/// Grayscale P5 image of the accuracy matrix, one `scale`-pixel block per cell.
/// Row 0 is the highest elevation value.
void write_heatmap_pgm(const HeatMapGrid& grid, const std::filesystem::path& path, int scale = 8);

}  // namespace reachlab
