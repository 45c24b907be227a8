#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <Eigen/Core>

#include "reachlab/arm_kinematics.hpp"

namespace reachlab {

inline constexpr int kFrameWidth = 64;
inline constexpr int kFrameHeight = 64;
inline constexpr int kFrameChannels = 3;
inline constexpr std::size_t kFrameBytes = kFrameWidth * kFrameHeight * kFrameChannels;

/// 64x64 RGB, row-major, interleaved channels.
struct FrameRGB {
  std::array<std::uint8_t, kFrameBytes> data{};

  std::uint8_t& at(int u, int v, int c) { return data[(v * kFrameWidth + u) * kFrameChannels + c]; }
  std::uint8_t at(int u, int v, int c) const { return data[(v * kFrameWidth + u) * kFrameChannels + c]; }
  bool operator==(const FrameRGB&) const = default;
};

/// Intrinsics and fixed scene layout. Defaults frame the full arm plus the
/// target workspace from a 2 m sphere.
struct RenderOptions {
  double vertical_fov_deg = 35.0;
  Point3 anchor{0.0, 0.0, 0.29};
  /// Direction the light travels (points downward). Kept in the x-z plane so
  /// the scene stays mirror-symmetric about y = 0.
  Point3 light_dir{0.5, 0.0, -1.0};
  double shadow_factor = 0.5;
  double floor_half_extent = 1.2;

  bool operator==(const RenderOptions&) const = default;
};

/// Camera on a sphere around the anchor. Azimuth rotates about world z,
/// elevation about y; negative elevation lifts the camera above the anchor.
struct CameraPose {
  double azimuth_deg = 180.0;
  double elevation_deg = -30.0;
  double radius = 2.0;

  Point3 position = Point3::Zero();
  Point3 forward = Point3::UnitX();
  Point3 right = -Point3::UnitY();
  Point3 down = -Point3::UnitZ();
  double focal_px = 0.0;
  double cx = kFrameWidth / 2.0;
  double cy = kFrameHeight / 2.0;

  /// 3x4 world-to-camera matrix [R | t] with rows (right, down, forward).
  Eigen::Matrix<double, 3, 4> extrinsics() const;
};

struct SceneState {
  JointVector joints;
  double target_x = 0.3;
  double target_y = 0.0;
  double target_size = 0.03;
  bool shadow_enabled = true;
  ArmGeometry geometry;
};

struct PixelCoord {
  double u;
  double v;
};

/// Builds the camera. Throws std::invalid_argument for a non-positive radius
/// or non-finite angles.
CameraPose camera_from_angles(double azimuth_deg, double elevation_deg, double radius = 2.0,
                              const RenderOptions& options = {});

/// Pinhole projection in continuous pixel coordinates (pixel i spans [i, i+1)).
/// Throws std::domain_error for points at or behind the camera plane.
PixelCoord project_point(const CameraPose& cam, const Point3& p);

FrameRGB render(const SceneState& scene, const CameraPose& cam, const RenderOptions& options = {});
void render_into(const SceneState& scene, const CameraPose& cam, const RenderOptions& options,
                 FrameRGB& out);

/// Red target classification used by tests and tooling.
bool is_target_red(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// World-space center of the target cube (resting on the floor).
Point3 target_center(const SceneState& scene);

std::uint64_t frame_hash(const FrameRGB& frame);

/// Writes a binary portable pixmap (P6).
void write_ppm(const std::filesystem::path& path, const FrameRGB& frame);

}  // namespace reachlab
