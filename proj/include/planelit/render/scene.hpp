#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "planelit/mesh/mesh.hpp"

namespace planelit::render {

/// Pinhole camera looking down +z of its own frame, image y pointing down.
/// x_cam = rotation * x_world + translation.
struct CameraPose {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Pixel coordinates of a camera-frame point with z > 0.
  Eigen::Vector2d project(const Vec3& cam) const { return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy}; }
  /// World-space direction of the ray through pixel coordinates (px, py), not normalized.
  Vec3 ray(double px, double py) const {
    return rotation.transpose() * Vec3((px - cx) / fx, (py - cy) / fy, 1.0);
  }
};

/// Square plane patch of side `extent` centered at `origin`, spanned by u and v.
struct PlanePose {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();
  double extent = 4.0;

  /// Requires {u, v, normal} orthonormal and right-handed within 1e-9.
  void validate() const;
  Mat3 basis() const;
  Vec3 point(double a, double b) const { return origin + a * u + b * v; }
  Eigen::Vector2d coords(const Vec3& p) const { return {(p - origin).dot(u), (p - origin).dot(v)}; }
  double height(const Vec3& p) const { return (p - origin).dot(normal); }
  bool contains(double a, double b) const { return std::abs(a) <= 0.5 * extent && std::abs(b) <= 0.5 * extent; }
  /// Ray-plane intersection parameter t (point = from + t * dir), if t > 0.
  std::optional<double> intersect(const Vec3& from, const Vec3& dir) const;
};

struct SceneSetup {
  CameraPose camera;
  PlanePose plane;
};

/// {intrinsics:{fx,fy,cx,cy}, extrinsics:{R:[9 row-major], t:[3]},
///  plane:{origin:[3], u:[3], v:[3], normal:[3], extent}}
nlohmann::json to_json(const SceneSetup& scene);
SceneSetup scene_from_json(const nlohmann::json& j);
SceneSetup load_scene(const std::filesystem::path& path);

/// Maps a mesh from the canonical object frame to the world so that its
/// support plane lands on `plane` at plane coordinates `position`, scaled by `scale`.
mesh::Mesh place_on_plane(const mesh::Mesh& object, const PlanePose& plane, const Eigen::Vector2d& position,
                          double scale = 1.0);
Vec3 place_point(const Vec3& p, const PlanePose& plane, const Eigen::Vector2d& position, double scale = 1.0);

}  // namespace planelit::render
