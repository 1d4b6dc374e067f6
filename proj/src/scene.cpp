#include "planelit/render/scene.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace planelit::render {

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string("scene: ") + what + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec3_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void CameraPose::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("CameraPose: focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite()) {
    throw std::invalid_argument("CameraPose: non-finite principal point or translation");
  }
  mesh::require_rotation(rotation);
}

void PlanePose::validate() const {
  const Mat3 b = basis();
  if ((b.transpose() * b - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || std::abs(b.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("PlanePose: u, v, normal must be a right-handed orthonormal basis");
  }
  if (!(extent > 0.0) || !origin.allFinite()) throw std::invalid_argument("PlanePose: bad origin or extent");
}

Mat3 PlanePose::basis() const {
  Mat3 b;
  b << u, v, normal;
  return b;
}

std::optional<double> PlanePose::intersect(const Vec3& from, const Vec3& dir) const {
  const double denom = dir.dot(normal);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (origin - from).dot(normal) / denom;
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

nlohmann::json to_json(const SceneSetup& s) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(s.camera.rotation(i, k));
  return {{"intrinsics", {{"fx", s.camera.fx}, {"fy", s.camera.fy}, {"cx", s.camera.cx}, {"cy", s.camera.cy}}},
          {"extrinsics", {{"R", r}, {"t", vec3_to_json(s.camera.translation)}}},
          {"plane",
           {{"origin", vec3_to_json(s.plane.origin)},
            {"u", vec3_to_json(s.plane.u)},
            {"v", vec3_to_json(s.plane.v)},
            {"normal", vec3_to_json(s.plane.normal)},
            {"extent", s.plane.extent}}}};
}

SceneSetup scene_from_json(const nlohmann::json& j) {
  SceneSetup s;
  const auto& in = j.at("intrinsics");
  s.camera.fx = in.at("fx").get<double>();
  s.camera.fy = in.at("fy").get<double>();
  s.camera.cx = in.at("cx").get<double>();
  s.camera.cy = in.at("cy").get<double>();
  const auto& ex = j.at("extrinsics");
  const auto& r = ex.at("R");
  if (!r.is_array() || r.size() != 9) throw std::invalid_argument("scene: extrinsics.R must hold 9 numbers");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) s.camera.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)].get<double>();
  s.camera.translation = vec3_from_json(ex.at("t"), "extrinsics.t");
  const auto& p = j.at("plane");
  s.plane.origin = vec3_from_json(p.at("origin"), "plane.origin");
  s.plane.u = vec3_from_json(p.at("u"), "plane.u");
  s.plane.v = vec3_from_json(p.at("v"), "plane.v");
  s.plane.normal = vec3_from_json(p.at("normal"), "plane.normal");
  s.plane.extent = p.value("extent", s.plane.extent);
  s.camera.validate();
  s.plane.validate();
  return s;
}

SceneSetup load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return scene_from_json(nlohmann::json::parse(in));
}

Vec3 place_point(const Vec3& p, const PlanePose& plane, const Eigen::Vector2d& position, double scale) {
  return plane.point(position.x(), position.y()) + scale * (plane.basis() * (p - Vec3(0, 0, mesh::kSupportHeight)));
}

mesh::Mesh place_on_plane(const mesh::Mesh& object, const PlanePose& plane, const Eigen::Vector2d& position,
                          double scale) {
  plane.validate();
  if (!(scale > 0.0)) throw std::invalid_argument("place_on_plane: scale must be positive");
  Matrix3X v(object.size(), 3);
  for (Eigen::Index i = 0; i < object.size(); ++i) {
    v.row(i) = place_point(object.vertices().row(i).transpose(), plane, position, scale).transpose();
  }
  const Matrix3X n = object.normals() * plane.basis().transpose();
  return mesh::Mesh(std::move(v), object.faces(), n);
}

}  // namespace planelit::render
