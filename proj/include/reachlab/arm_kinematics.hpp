#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

#include "reachlab/random.hpp"

namespace reachlab {

inline constexpr std::size_t kNumJoints = 6;

using Point3 = Eigen::Vector3d;

/// Six joint angles in degrees, axis 1 first.
struct JointVector {
  std::array<double, kNumJoints> deg{};

  double& operator[](std::size_t i) { return deg[i]; }
  double operator[](std::size_t i) const { return deg[i]; }
  bool operator==(const JointVector&) const = default;

  JointVector operator+(const JointVector& other) const;
  static JointVector zero() { return {}; }
};

struct JointRange {
  double lower;
  double upper;
};

/// IRB120 working ranges in degrees.
inline constexpr std::array<JointRange, kNumJoints> kJointLimits{{
    {-165.0, 165.0},
    {-110.0, 110.0},
    {-110.0, 70.0},
    {-160.0, 160.0},
    {-120.0, 120.0},
    {-400.0, 400.0},
}};

/// Fraction by which each working-range limit is pulled toward zero when
/// sampling initial configurations.
inline constexpr double kInitialShrink = 0.15;

/// Six-axis serial chain, meters. Defaults are the IRB120 datasheet values.
struct ArmGeometry {
  double base_height = 0.290;     // floor to axis-2 center
  double upper_arm = 0.270;       // axis 2 to axis 3
  double elbow_offset = 0.070;    // axis 3 to forearm line
  double forearm = 0.302;         // forearm line to wrist center
  double wrist_to_flange = 0.072;

  bool operator==(const ArmGeometry&) const = default;
};

/// Key points along the chain in the world frame. The base frame sits at the
/// world origin with z up.
struct ArmPose {
  Point3 base;
  Point3 shoulder;   // axis-2 center
  Point3 elbow;      // axis-3 center
  Point3 forearm_start;
  Point3 wrist;      // axis-5 center
  Point3 flange;

  /// The point whose distance to the target is scored.
  const Point3& tool() const { return wrist; }
};

JointVector clamp_joints(const JointVector& q);

/// Shrunk sampling interval for one axis.
JointRange initial_range(std::size_t axis);

/// Returns clamp_joints(q + delta). Throws std::invalid_argument when any
/// |delta_i| exceeds mpi_i.
JointVector apply_increment(const JointVector& q, const JointVector& delta,
                            const JointVector& mpi);

ArmPose forward_kinematics(const JointVector& q, const ArmGeometry& geom = {});

/// Gripper position (the scored tool point).
Point3 gripper_position(const JointVector& q, const ArmGeometry& geom = {});

JointVector sample_initial_joints(Rng& rng);

}  // namespace reachlab
