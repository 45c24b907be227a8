#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reachlab/arm_kinematics.hpp"
#include "reachlab/random.hpp"
#include "reachlab/scene_renderer.hpp"

namespace reachlab {

inline constexpr int kMaxEpisodeSteps = 50;

enum class MdpVariant { M0, M1, M2, M3, M4, M5, M6 };

std::string_view to_string(MdpVariant v);
/// Parses "M0".."M6"; throws std::invalid_argument otherwise.
MdpVariant parse_variant(std::string_view text);

/// One row of the MDP design table plus the shared episode rules.
struct MdpSpec {
  MdpVariant variant = MdpVariant::M1;
  JointVector mpi{{9.0, 9.0, 9.0, 9.0, 9.0, 9.0}};
  /// Episode ends successfully at or below this gripper-target distance.
  double success_distance = 0.05;
  /// Distance the M5/M6 action gates are scaled from (training success distance).
  double rewarding_distance = 0.05;
  int max_steps = kMaxEpisodeSteps;
};

/// Camera pose distribution per episode. A collapsed interval is a fixed value.
struct DrSpec {
  double azimuth_lo = 180.0;
  double azimuth_hi = 180.0;
  double elevation_lo = -30.0;
  double elevation_hi = -30.0;

  static DrSpec baseline() { return {}; }
  static DrSpec randomized() { return {160.0, 200.0, -40.0, -20.0}; }
  static DrSpec fixed(double az, double el) { return {az, az, el, el}; }
  bool is_fixed() const { return azimuth_lo == azimuth_hi && elevation_lo == elevation_hi; }
  bool operator==(const DrSpec&) const = default;
};

struct TargetBox {
  double x_lo = 0.2, x_hi = 0.4;
  double y_lo = -0.3, y_hi = 0.3;
};

struct EnvConfig {
  MdpSpec mdp;
  DrSpec dr;
  TargetBox targets;
  ArmGeometry geometry;
  RenderOptions render;
  bool shadow_enabled = true;
  double camera_radius = 2.0;
};

/// Per-joint increment lists in degrees; every joint has the same count.
struct ActionSet {
  std::array<std::vector<double>, kNumJoints> increments;
  std::size_t size() const { return increments[0].size(); }
};

struct EpisodeState {
  JointVector joints;
  double target_x = 0.0;
  double target_y = 0.0;
  CameraPose camera;
  int step_count = 0;
  bool done = false;
  double last_distance = 0.0;
  double initial_distance = 0.0;
};

struct Observation {
  EpisodeState state;
  FrameRGB frame;
};

struct StepResult {
  EpisodeState state;
  FrameRGB frame;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

/// Number of entries per joint for a variant (constant across the M5/M6 gate).
std::size_t action_count(MdpVariant v);

/// Increment multipliers of MPI for a variant at a given distance.
std::vector<double> action_fractions(MdpVariant v, double dist, double rewarding_distance);

/// Throws std::invalid_argument for negative distance.
ActionSet action_set(const MdpSpec& spec, double dist);

/// Positive success reward by episode length for a variant.
double success_reward(MdpVariant v, int episode_length);

double failure_penalty(double dist);

double reward_fn(const MdpSpec& spec, double dist, int episode_length, bool success);

std::pair<double, double> sample_target(Rng& rng, const TargetBox& box = {});

CameraPose sample_camera(const DrSpec& dr, Rng& rng, double radius = 2.0,
                         const RenderOptions& options = {});

SceneState scene_of(const EnvConfig& config, const EpisodeState& state);

double gripper_target_distance(const EnvConfig& config, const JointVector& q, double tx,
                               double ty);

Observation reset(const EnvConfig& config, Rng& rng);

/// Applies one action index per joint. Throws std::logic_error on a finished
/// episode and std::out_of_range on an invalid index.
StepResult step(const EnvConfig& config, const EpisodeState& state,
                std::span<const int, kNumJoints> actions);

/// Owns one environment instance and its random stream (one per worker).
class ReachEnv {
 public:
  ReachEnv(EnvConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {}

  const Observation& reset();
  const StepResult& step(std::span<const int, kNumJoints> actions);

  const EnvConfig& config() const { return config_; }
  const EpisodeState& state() const { return last_.state; }
  const FrameRGB& frame() const { return last_.frame; }
  std::size_t actions_per_joint() const { return action_count(config_.mdp.variant); }

 private:
  EnvConfig config_;
  Rng rng_;
  Observation obs_;
  StepResult last_;
};

}  // namespace reachlab
