#include "reachlab/scene_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>

namespace reachlab {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

using Color = Eigen::Vector3d;

const Color kBackground{60, 70, 90};
const Color kFloor{170, 170, 160};
const Color kTargetRed{225, 25, 25};
constexpr double kSubOffsets[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};

struct Capsule {
  Point3 a;
  Point3 b;
  double radius;
  Color color;
};

struct PixelBox {
  int u0 = 0, v0 = 0, u1 = kFrameWidth - 1, v1 = kFrameHeight - 1;
  bool contains(int u, int v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
};

// Nearest positive hit of a ray with a capsule, or +inf. Sets the outward normal.
double intersect_capsule(const Point3& ro, const Point3& rd, const Capsule& cap, Point3* normal) {
  const Point3 ba = cap.b - cap.a;
  const Point3 oa = ro - cap.a;
  const double baba = ba.dot(ba);
  const double bard = ba.dot(rd);
  const double baoa = ba.dot(oa);
  const double rdoa = rd.dot(oa);
  const double oaoa = oa.dot(oa);
  const double r2 = cap.radius * cap.radius;
  double t = kInf;

  const double a = baba - bard * bard;
  if (baba > 1e-12 && a > 1e-12) {
    const double b = baba * rdoa - baoa * bard;
    const double c = baba * oaoa - baoa * baoa - r2 * baba;
    const double h = b * b - a * c;
    if (h < 0.0) return kInf;
    const double tb = (-b - std::sqrt(h)) / a;
    const double y = baoa + tb * bard;
    if (y > 0.0 && y < baba && tb > 0.0) t = tb;
  }
  if (t == kInf) {
    // End caps.
    for (const Point3* end : {&cap.a, &cap.b}) {
      const Point3 oc = ro - *end;
      const double b = rd.dot(oc);
      const double c = oc.dot(oc) - r2;
      const double h = b * b - c;
      if (h <= 0.0) continue;
      const double tc = -b - std::sqrt(h);
      if (tc > 0.0 && tc < t) t = tc;
    }
  }
  if (t == kInf) return kInf;
  if (normal) {
    const Point3 pa = ro + t * rd - cap.a;
    const double h = baba > 1e-12 ? std::clamp(pa.dot(ba) / baba, 0.0, 1.0) : 0.0;
    *normal = (pa - h * ba) / cap.radius;
  }
  return t;
}

// Slab test against an axis-aligned box.
double intersect_box(const Point3& ro, const Point3& rd, const Point3& lo, const Point3& hi,
                     Point3* normal) {
  double tmin = -kInf, tmax = kInf;
  int axis = -1;
  double sign = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (rd[k] == 0.0) {
      if (ro[k] < lo[k] || ro[k] > hi[k]) return kInf;
      continue;
    }
    double t1 = (lo[k] - ro[k]) / rd[k];
    double t2 = (hi[k] - ro[k]) / rd[k];
    double s = -1.0;
    if (t1 > t2) {
      std::swap(t1, t2);
      s = 1.0;
    }
    if (t1 > tmin) {
      tmin = t1;
      axis = k;
      sign = s;
    }
    tmax = std::min(tmax, t2);
  }
  if (tmin > tmax || tmin <= 0.0 || axis < 0) return kInf;
  if (normal) {
    *normal = Point3::Zero();
    (*normal)[axis] = sign;
  }
  return tmin;
}

std::vector<Capsule> arm_capsules(const SceneState& scene) {
  const ArmPose p = forward_kinematics(scene.joints, scene.geometry);
  return {
      {p.base, p.shoulder, 0.060, {75, 75, 85}},
      {p.shoulder, p.elbow, 0.045, {235, 125, 35}},
      {p.elbow, p.forearm_start, 0.040, {205, 105, 30}},
      {p.forearm_start, p.wrist, 0.035, {240, 205, 45}},
      {p.wrist, p.flange, 0.025, {35, 65, 205}},
  };
}

PixelBox capsule_box(const CameraPose& cam, const Capsule& c) {
  const double za = (c.a - cam.position).dot(cam.forward);
  const double zb = (c.b - cam.position).dot(cam.forward);
  const double zmin = std::min(za, zb) - c.radius;
  if (zmin <= 0.05) return {};
  const PixelCoord pa = project_point(cam, c.a);
  const PixelCoord pb = project_point(cam, c.b);
  const double pad = 1.5 * cam.focal_px * c.radius / zmin + 1.0;
  PixelBox box;
  box.u0 = std::max(0, static_cast<int>(std::floor(std::min(pa.u, pb.u) - pad)));
  box.u1 = std::min(kFrameWidth - 1, static_cast<int>(std::ceil(std::max(pa.u, pb.u) + pad)));
  box.v0 = std::max(0, static_cast<int>(std::floor(std::min(pa.v, pb.v) - pad)));
  box.v1 = std::min(kFrameHeight - 1, static_cast<int>(std::ceil(std::max(pa.v, pb.v) + pad)));
  return box;
}

PixelBox points_box(const CameraPose& cam, const std::vector<Point3>& pts) {
  double umin = kInf, umax = -kInf, vmin = kInf, vmax = -kInf;
  for (const auto& p : pts) {
    if ((p - cam.position).dot(cam.forward) <= 0.05) return {};
    const PixelCoord c = project_point(cam, p);
    umin = std::min(umin, c.u);
    umax = std::max(umax, c.u);
    vmin = std::min(vmin, c.v);
    vmax = std::max(vmax, c.v);
  }
  PixelBox box;
  box.u0 = std::max(0, static_cast<int>(std::floor(umin)) - 1);
  box.u1 = std::min(kFrameWidth - 1, static_cast<int>(std::ceil(umax)) + 1);
  box.v0 = std::max(0, static_cast<int>(std::floor(vmin)) - 1);
  box.v1 = std::min(kFrameHeight - 1, static_cast<int>(std::ceil(vmax)) + 1);
  return box;
}

double lambert(const Point3& normal, const Point3& to_light) {
  return 0.55 + 0.45 * std::max(0.0, normal.dot(to_light));
}

std::uint8_t to_byte(double x) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L));
}

}  // namespace

Eigen::Matrix<double, 3, 4> CameraPose::extrinsics() const {
  Eigen::Matrix<double, 3, 4> m;
  m.row(0) << right.transpose(), -right.dot(position);
  m.row(1) << down.transpose(), -down.dot(position);
  m.row(2) << forward.transpose(), -forward.dot(position);
  return m;
}

CameraPose camera_from_angles(double azimuth_deg, double elevation_deg, double radius,
                              const RenderOptions& options) {
  if (!std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg) || !std::isfinite(radius))
    throw std::invalid_argument("camera angles and radius must be finite");
  if (radius <= 0.0) throw std::invalid_argument("camera radius must be positive");

  CameraPose cam;
  cam.azimuth_deg = azimuth_deg;
  cam.elevation_deg = elevation_deg;
  cam.radius = radius;

  // Azimuth 180 puts the camera on the +x side, facing the robot across the
  // target area. Angles are measured relative to 180 deg.
  const double rel = (azimuth_deg - 180.0) * kDegToRad;
  const double el = elevation_deg * kDegToRad;
  const Point3 dir{std::cos(rel) * std::cos(el), std::sin(rel) * std::cos(el), -std::sin(el)};
  cam.position = options.anchor + radius * dir;
  cam.forward = -dir;
  const Point3 up = Point3::UnitZ();
  cam.right = cam.forward.cross(up).normalized();
  cam.down = cam.forward.cross(cam.right);
  cam.focal_px = (kFrameHeight / 2.0) / std::tan(0.5 * options.vertical_fov_deg * kDegToRad);
  return cam;
}

PixelCoord project_point(const CameraPose& cam, const Point3& p) {
  const Point3 rel = p - cam.position;
  const double z = rel.dot(cam.forward);
  if (!(z > 1e-9)) throw std::domain_error("point is behind the camera");
  return {cam.cx + cam.focal_px * rel.dot(cam.right) / z,
          cam.cy + cam.focal_px * rel.dot(cam.down) / z};
}

Point3 target_center(const SceneState& scene) {
  return {scene.target_x, scene.target_y, 0.5 * scene.target_size};
}

bool is_target_red(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return r >= 100 && g <= 60 && b <= 60;
}

void render_into(const SceneState& scene, const CameraPose& cam, const RenderOptions& options,
                 FrameRGB& out) {
  const std::vector<Capsule> links = arm_capsules(scene);
  std::vector<PixelBox> link_boxes;
  link_boxes.reserve(links.size());
  for (const auto& c : links) link_boxes.push_back(capsule_box(cam, c));

  const double half = 0.5 * scene.target_size;
  const Point3 box_lo{scene.target_x - half, scene.target_y - half, 0.0};
  const Point3 box_hi{scene.target_x + half, scene.target_y + half, scene.target_size};
  std::vector<Point3> corners;
  for (int i = 0; i < 8; ++i)
    corners.emplace_back(i & 1 ? box_hi.x() : box_lo.x(), i & 2 ? box_hi.y() : box_lo.y(),
                         i & 4 ? box_hi.z() : box_lo.z());
  const PixelBox target_box = points_box(cam, corners);

  const Point3 light = options.light_dir.normalized();
  const Point3 to_light = -light;

  for (int v = 0; v < kFrameHeight; ++v) {
    for (int u = 0; u < kFrameWidth; ++u) {
      const double du = (u + 0.5 - cam.cx) / cam.focal_px;
      const double dv = (v + 0.5 - cam.cy) / cam.focal_px;
      const Point3 rd = (cam.forward + du * cam.right + dv * cam.down).normalized();
      const Point3& ro = cam.position;

      double best = kInf;
      Color color = kBackground;
      bool floor_hit = false;

      if (rd.z() < 0.0) {
        const double t = -ro.z() / rd.z();
        const Point3 p = ro + t * rd;
        if (t > 0.0 && std::abs(p.x()) <= options.floor_half_extent &&
            std::abs(p.y()) <= options.floor_half_extent) {
          best = t;
          color = kFloor;
          floor_hit = true;
        }
      }

      Point3 n;
      for (std::size_t k = 0; k < links.size(); ++k) {
        if (!link_boxes[k].contains(u, v)) continue;
        const double t = intersect_capsule(ro, rd, links[k], &n);
        if (t < best) {
          best = t;
          color = links[k].color * lambert(n, to_light);
          floor_hit = false;
        }
      }
      if (target_box.contains(u, v)) {
        // 3x3 sub-pixel samples; any unoccluded hit claims the pixel.
        for (int s = 0; s < 9; ++s) {
          const double su = du + kSubOffsets[s % 3] / cam.focal_px;
          const double sv = dv + kSubOffsets[s / 3] / cam.focal_px;
          const Point3 srd = (cam.forward + su * cam.right + sv * cam.down).normalized();
          const double t = intersect_box(ro, srd, box_lo, box_hi, &n);
          if (t == kInf) continue;
          bool occluded = false;
          for (std::size_t k = 0; k < links.size() && !occluded; ++k)
            occluded = link_boxes[k].contains(u, v) && intersect_capsule(ro, srd, links[k], nullptr) < t;
          if (occluded) continue;
          color = kTargetRed * lambert(n, to_light);
          floor_hit = false;
          break;
        }
      }

      if (floor_hit && scene.shadow_enabled) {
        const Point3 p = ro + best * rd;
        for (const auto& link : links) {
          if (intersect_capsule(p, to_light, link, nullptr) < kInf) {
            color *= options.shadow_factor;
            break;
          }
        }
      }

      for (int c = 0; c < kFrameChannels; ++c) out.at(u, v, c) = to_byte(color[c]);
    }
  }
}

FrameRGB render(const SceneState& scene, const CameraPose& cam, const RenderOptions& options) {
  FrameRGB frame;
  render_into(scene, cam, options, frame);
  return frame;
}

std::uint64_t frame_hash(const FrameRGB& frame) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : frame.data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_ppm(const std::filesystem::path& path, const FrameRGB& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << kFrameWidth << ' ' << kFrameHeight << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.data.data()),
            static_cast<std::streamsize>(frame.data.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace reachlab
