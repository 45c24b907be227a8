#include "reachlab/reach_env.hpp"

#include <cmath>
#include <stdexcept>

namespace reachlab {

namespace {

std::vector<double> symmetric(std::initializer_list<double> magnitudes) {
  std::vector<double> out{0.0};
  for (double m : magnitudes) {
    out.push_back(m);
    out.push_back(-m);
  }
  return out;
}

// Length bands (0,30], (30,35], (35,40], (40,50] carry these rewards.
double banded(int length, double r30, double r35, double r40, double r50) {
  if (length <= 30) return r30;
  if (length <= 35) return r35;
  if (length <= 40) return r40;
  return r50;
}

}  // namespace

std::string_view to_string(MdpVariant v) {
  static constexpr std::string_view names[] = {"M0", "M1", "M2", "M3", "M4", "M5", "M6"};
  return names[static_cast<int>(v)];
}

MdpVariant parse_variant(std::string_view text) {
  if (text.size() == 2 && (text[0] == 'M' || text[0] == 'm') && text[1] >= '0' && text[1] <= '6')
    return static_cast<MdpVariant>(text[1] - '0');
  throw std::invalid_argument("unknown MDP variant '" + std::string(text) + "' (expected M0..M6)");
}

std::size_t action_count(MdpVariant v) {
  switch (v) {
    case MdpVariant::M0: return 5;
    case MdpVariant::M4: return 13;
    case MdpVariant::M1:
    case MdpVariant::M2:
    case MdpVariant::M3:
    case MdpVariant::M5:
    case MdpVariant::M6: return 7;
  }
  throw std::invalid_argument("unknown MDP variant");
}

std::vector<double> action_fractions(MdpVariant v, double dist, double rewarding_distance) {
  switch (v) {
    case MdpVariant::M0: return symmetric({1.0, 1.0 / 2});
    case MdpVariant::M1:
    case MdpVariant::M2:
    case MdpVariant::M3: return symmetric({1.0, 1.0 / 10, 1.0 / 100});
    case MdpVariant::M4:
      return symmetric({1.0, 1.0 / 2, 1.0 / 4, 1.0 / 16, 1.0 / 64, 1.0 / 128});
    case MdpVariant::M5:
      if (dist > 1.5 * rewarding_distance) return symmetric({1.0, 1.0 / 2, 1.0 / 4});
      return symmetric({1.0 / 10, 1.0 / 50, 1.0 / 100});
    case MdpVariant::M6:
      if (dist > 1.3 * rewarding_distance) return symmetric({1.0, 1.0 / 2, 1.0 / 4});
      return symmetric({1.0 / 4, 1.0 / 10, 1.0 / 25});
  }
  throw std::invalid_argument("unknown MDP variant");
}

ActionSet action_set(const MdpSpec& spec, double dist) {
  if (!(dist >= 0.0)) throw std::invalid_argument("distance must be non-negative");
  const auto fractions = action_fractions(spec.variant, dist, spec.rewarding_distance);
  ActionSet set;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    set.increments[j].reserve(fractions.size());
    for (double f : fractions) set.increments[j].push_back(f * spec.mpi[j]);
  }
  return set;
}

double success_reward(MdpVariant v, int episode_length) {
  switch (v) {
    case MdpVariant::M2:
    case MdpVariant::M6: return banded(episode_length, 90, 70, 50, 30);
    case MdpVariant::M3: return banded(episode_length, 100, 50, 30, 20);
    default: return 70.0;
  }
}

double failure_penalty(double dist) {
  const double d2 = 2.0 * dist;
  return -(d2 * d2);
}

double reward_fn(const MdpSpec& spec, double dist, int episode_length, bool success) {
  return success ? success_reward(spec.variant, episode_length) : failure_penalty(dist);
}

std::pair<double, double> sample_target(Rng& rng, const TargetBox& box) {
  const double x = rng.uniform(box.x_lo, box.x_hi);
  const double y = rng.uniform(box.y_lo, box.y_hi);
  return {x, y};
}

CameraPose sample_camera(const DrSpec& dr, Rng& rng, double radius, const RenderOptions& options) {
  if (dr.is_fixed()) return camera_from_angles(dr.azimuth_lo, dr.elevation_lo, radius, options);
  const double az = rng.uniform(dr.azimuth_lo, dr.azimuth_hi);
  const double el = rng.uniform(dr.elevation_lo, dr.elevation_hi);
  return camera_from_angles(az, el, radius, options);
}

SceneState scene_of(const EnvConfig& config, const EpisodeState& state) {
  SceneState scene;
  scene.joints = state.joints;
  scene.target_x = state.target_x;
  scene.target_y = state.target_y;
  scene.shadow_enabled = config.shadow_enabled;
  scene.geometry = config.geometry;
  return scene;
}

double gripper_target_distance(const EnvConfig& config, const JointVector& q, double tx,
                               double ty) {
  SceneState probe;
  probe.target_x = tx;
  probe.target_y = ty;
  return (gripper_position(q, config.geometry) - target_center(probe)).norm();
}

Observation reset(const EnvConfig& config, Rng& rng) {
  Observation obs;
  EpisodeState& s = obs.state;
  s.joints = sample_initial_joints(rng);
  std::tie(s.target_x, s.target_y) = sample_target(rng, config.targets);
  s.camera = sample_camera(config.dr, rng, config.camera_radius, config.render);
  s.step_count = 0;
  s.done = false;
  s.last_distance = gripper_target_distance(config, s.joints, s.target_x, s.target_y);
  s.initial_distance = s.last_distance;
  render_into(scene_of(config, s), s.camera, config.render, obs.frame);
  return obs;
}

StepResult step(const EnvConfig& config, const EpisodeState& state,
                std::span<const int, kNumJoints> actions) {
  if (state.done) throw std::logic_error("step called on a finished episode");
  const ActionSet set = action_set(config.mdp, state.last_distance);
  JointVector delta;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const int a = actions[j];
    if (a < 0 || static_cast<std::size_t>(a) >= set.size())
      throw std::out_of_range("action index " + std::to_string(a) + " invalid for joint " +
                              std::to_string(j + 1));
    delta[j] = set.increments[j][static_cast<std::size_t>(a)];
  }

  StepResult r;
  r.state = state;
  EpisodeState& s = r.state;
  s.joints = apply_increment(state.joints, delta, config.mdp.mpi);
  s.step_count = state.step_count + 1;
  s.last_distance = gripper_target_distance(config, s.joints, s.target_x, s.target_y);
  r.success = s.last_distance <= config.mdp.success_distance;
  r.reward = reward_fn(config.mdp, s.last_distance, s.step_count, r.success);
  s.done = r.success || s.step_count >= config.mdp.max_steps;
  r.done = s.done;
  render_into(scene_of(config, s), s.camera, config.render, r.frame);
  return r;
}

const Observation& ReachEnv::reset() {
  obs_ = reachlab::reset(config_, rng_);
  last_.state = obs_.state;
  last_.frame = obs_.frame;
  last_.reward = 0.0;
  last_.done = false;
  last_.success = false;
  return obs_;
}

const StepResult& ReachEnv::step(std::span<const int, kNumJoints> actions) {
  last_ = reachlab::step(config_, last_.state, actions);
  return last_;
}

}  // namespace reachlab
