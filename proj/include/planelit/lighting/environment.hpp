#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "planelit/mesh/mesh.hpp"

namespace planelit::lighting {

struct PointLight {
  Vec3 position = Vec3::Zero();
  double intensity = 0.0;  // radiant strength, >= 0
};

/// One illumination condition: a set of point lights.
struct LightingEnvironment {
  std::vector<PointLight> lights;
  std::uint64_t seed = 0;

  double total_intensity() const;
};

/// Throws unless there is at least one light and every light is finite with
/// non-negative intensity.
void validate(const LightingEnvironment& env);

/// Per-vertex overall illumination
///   L(v) = sum_k [w_k . n > 0] * s_k / |x_k - v|^2 * w_k,   w_k = (x_k - v)/|x_k - v|
/// Lights below a vertex's horizon contribute nothing; no visibility test.
/// Throws if a light sits on a vertex (distance < 1e-9).
Matrix3X compute_oi(const Matrix3X& vertices, const Matrix3X& normals, const LightingEnvironment& env);
inline Matrix3X compute_oi(const mesh::Mesh& m, const LightingEnvironment& env) {
  return compute_oi(m.vertices(), m.normals(), env);
}

/// I(v) = max(0, L(v) . n(v)), one column.
template <typename DerivedL, typename DerivedN>
Matrix reflected_radiance(const Eigen::MatrixBase<DerivedL>& oi, const Eigen::MatrixBase<DerivedN>& normals) {
  if (oi.rows() != normals.rows() || oi.cols() != 3 || normals.cols() != 3) {
    throw std::invalid_argument("reflected_radiance: expected matching N x 3 fields");
  }
  return oi.cwiseProduct(normals).rowwise().sum().cwiseMax(0.0);
}

/// Half-space that lights must stay above, e.g. the floor an object rests on.
struct SupportPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double min_height = 0.0;
};

struct SamplingOptions {
  int count = 32;
  double radius_min = 2.5;
  double radius_max = 6.0;
  double intensity_min = 0.5;
  double intensity_max = 2.0;
  /// Bounds on the mean reflected radiance over the exposure reference mesh.
  double mean_min = 0.2;
  double mean_max = 0.8;
  std::optional<SupportPlane> support;
};

/// Draws `count` lights uniformly (by volume) in the spherical shell
/// [radius_min, radius_max] around the object's centroid, rejecting positions
/// below the support plane, with intensities uniform in the given range. The
/// whole set is then rescaled so the mean rendered intensity of
/// `exposure_reference` (the object when null) lies in [mean_min, mean_max].
LightingEnvironment sample_lighting_environment(std::uint64_t seed, const mesh::Mesh& object,
                                                const SamplingOptions& options,
                                                const mesh::Mesh* exposure_reference = nullptr);

/// Uniformly rescales intensities so the mean reflected radiance over `reference`
/// lands in [lo, hi]; leaves the environment untouched when already inside.
/// Returns the applied factor.
double normalize_exposure(LightingEnvironment& env, const mesh::Mesh& reference, double lo, double hi);

/// Rotates every light position about `center`.
LightingEnvironment rotate_environment(const LightingEnvironment& env, const Mat3& rotation,
                                       const Vec3& center = Vec3::Zero());
LightingEnvironment translate_environment(const LightingEnvironment& env, const Vec3& offset);

/// Uniform random rotation over SO(3) (Shoemake's unit-quaternion method).
Mat3 random_rotation(Rng& rng);

nlohmann::json to_json(const LightingEnvironment& env);
LightingEnvironment environment_from_json(const nlohmann::json& j);
void save_environment(const std::string& path, const LightingEnvironment& env);
LightingEnvironment load_environment(const std::string& path);

}  // namespace planelit::lighting
