#include "reachlab/arm_kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

namespace reachlab {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

using Transform = Eigen::Matrix4d;

// Standard Denavit-Hartenberg link transform Rz(theta) Tz(d) Tx(a) Rx(alpha),
// taking the joint angle and the twist as exact (cos, sin) pairs.
Transform dh(double ct, double st, double d, double a, double ca, double sa) {
  Transform t;
  t << ct, -st * ca, st * sa, a * ct,
       st, ct * ca, -ct * sa, a * st,
       0.0, sa, ca, d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

Point3 origin(const Transform& t) { return t.block<3, 1>(0, 3); }

}  // namespace

JointVector JointVector::operator+(const JointVector& other) const {
  JointVector out;
  for (std::size_t i = 0; i < kNumJoints; ++i) out[i] = deg[i] + other[i];
  return out;
}

JointVector clamp_joints(const JointVector& q) {
  JointVector out;
  for (std::size_t i = 0; i < kNumJoints; ++i)
    out[i] = std::clamp(q[i], kJointLimits[i].lower, kJointLimits[i].upper);
  return out;
}

JointRange initial_range(std::size_t axis) {
  const auto& lim = kJointLimits.at(axis);
  return {lim.lower * (1.0 - kInitialShrink), lim.upper * (1.0 - kInitialShrink)};
}

JointVector apply_increment(const JointVector& q, const JointVector& delta,
                            const JointVector& mpi) {
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (!(std::abs(delta[i]) <= mpi[i])) {
      throw std::invalid_argument("increment on axis " + std::to_string(i + 1) + " (" +
                                  std::to_string(delta[i]) + " deg) exceeds MPI " +
                                  std::to_string(mpi[i]));
    }
  }
  return clamp_joints(q + delta);
}

ArmPose forward_kinematics(const JointVector& q, const ArmGeometry& g) {
  double c[kNumJoints], sn[kNumJoints];
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const double th = q[i] * kDegToRad;
    c[i] = std::cos(th);
    sn[i] = std::sin(th);
  }
  // Twists are -90, 0, -90, +90, -90, 0 deg; axis 2 carries a -90 deg offset
  // (upper arm vertical at zero) and axis 6 a 180 deg offset.
  const Transform t1 = dh(c[0], sn[0], g.base_height, 0.0, 0.0, -1.0);
  const Transform t2 = t1 * dh(sn[1], -c[1], 0.0, g.upper_arm, 1.0, 0.0);
  const Transform t3 = t2 * dh(c[2], sn[2], 0.0, g.elbow_offset, 0.0, -1.0);
  const Transform t4 = t3 * dh(c[3], sn[3], g.forearm, 0.0, 0.0, 1.0);
  const Transform t5 = t4 * dh(c[4], sn[4], 0.0, 0.0, 0.0, -1.0);
  const Transform t6 = t5 * dh(-c[5], -sn[5], g.wrist_to_flange, 0.0, 1.0, 0.0);

  ArmPose pose;
  pose.base = Point3::Zero();
  pose.shoulder = origin(t1);
  pose.elbow = origin(t2);
  pose.forearm_start = origin(t3);
  pose.wrist = origin(t5);
  pose.flange = origin(t6);
  return pose;
}

Point3 gripper_position(const JointVector& q, const ArmGeometry& geom) {
  return forward_kinematics(q, geom).tool();
}

JointVector sample_initial_joints(Rng& rng) {
  JointVector q;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const auto r = initial_range(i);
    q[i] = rng.uniform(r.lower, r.upper);
  }
  return q;
}

}  // namespace reachlab
