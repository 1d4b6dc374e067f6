#include "planelit/lighting/environment.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace planelit::lighting {

double LightingEnvironment::total_intensity() const {
  double s = 0.0;
  for (const auto& l : lights) s += l.intensity;
  return s;
}

void validate(const LightingEnvironment& env) {
  if (env.lights.empty()) throw std::invalid_argument("lighting environment has no lights");
  for (std::size_t i = 0; i < env.lights.size(); ++i) {
    const auto& l = env.lights[i];
    if (!l.position.allFinite()) throw std::invalid_argument("light " + std::to_string(i) + ": non-finite position");
    if (!(l.intensity >= 0.0) || !std::isfinite(l.intensity)) {
      throw std::invalid_argument("light " + std::to_string(i) + ": intensity must be finite and >= 0");
    }
  }
}

Matrix3X compute_oi(const Matrix3X& vertices, const Matrix3X& normals, const LightingEnvironment& env) {
  if (vertices.rows() != normals.rows()) throw std::invalid_argument("compute_oi: vertex/normal count mismatch");
  validate(env);
  Matrix3X oi = Matrix3X::Zero(vertices.rows(), 3);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const Vec3 v = vertices.row(i).transpose();
    const Vec3 n = normals.row(i).transpose();
    Vec3 acc = Vec3::Zero();
    for (const auto& l : env.lights) {
      const Vec3 d = l.position - v;
      const double dist2 = d.squaredNorm();
      if (dist2 < 1e-18) {
        throw std::invalid_argument("compute_oi: light coincides with vertex " + std::to_string(i));
      }
      const double dist = std::sqrt(dist2);
      const Vec3 w = d / dist;
      if (w.dot(n) <= 0.0) continue;
      acc += (l.intensity / dist2) * w;
    }
    oi.row(i) = acc.transpose();
  }
  return oi;
}

namespace {

double mean_radiance(const mesh::Mesh& m, const LightingEnvironment& env) {
  return reflected_radiance(compute_oi(m, env), m.normals()).mean();
}

}  // namespace

double normalize_exposure(LightingEnvironment& env, const mesh::Mesh& reference, double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("normalize_exposure: need 0 < lo <= hi");
  const double mean = mean_radiance(reference, env);
  if (!(mean > 0.0)) throw std::invalid_argument("normalize_exposure: environment leaves the reference mesh unlit");
  // Aim a hair inside the interval so rounding cannot push the mean out.
  double factor = 1.0;
  if (mean < lo) factor = lo * (1.0 + 1e-9) / mean;
  if (mean > hi) factor = hi * (1.0 - 1e-9) / mean;
  if (factor != 1.0) {
    for (auto& l : env.lights) l.intensity *= factor;
  }
  return factor;
}

LightingEnvironment sample_lighting_environment(std::uint64_t seed, const mesh::Mesh& object,
                                                const SamplingOptions& o, const mesh::Mesh* exposure_reference) {
  if (o.count < 1) throw std::invalid_argument("sample_lighting_environment: count must be >= 1");
  if (!(o.radius_min < o.radius_max) || !(o.intensity_min <= o.intensity_max) || o.intensity_min < 0.0 ||
      !(o.mean_min <= o.mean_max)) {
    throw std::invalid_argument("sample_lighting_environment: empty or invalid range");
  }
  const double obj_radius = object.bounding_radius();
  if (!(o.radius_min > obj_radius)) {
    throw std::invalid_argument("sample_lighting_environment: radius_min " + std::to_string(o.radius_min) +
                                " must exceed object bounding radius " + std::to_string(obj_radius));
  }
  const Vec3 center = object.centroid();
  Rng rng(seed);
  LightingEnvironment env;
  env.seed = seed;
  const double r0 = std::pow(o.radius_min, 3.0), r1 = std::pow(o.radius_max, 3.0);
  constexpr int kMaxAttempts = 100000;
  for (int k = 0; k < o.count; ++k) {
    Vec3 pos;
    int attempts = 0;
    while (true) {
      if (++attempts > kMaxAttempts) {
        throw std::invalid_argument("sample_lighting_environment: support plane excludes the sampling shell");
      }
      const double z = uniform(rng, -1.0, 1.0);
      const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double r = std::cbrt(uniform(rng, r0, r1));
      pos = center + r * Vec3(s * std::cos(phi), s * std::sin(phi), z);
      if (!o.support) break;
      if ((pos - o.support->point).dot(o.support->normal.normalized()) >= o.support->min_height) break;
    }
    env.lights.push_back({pos, uniform(rng, o.intensity_min, o.intensity_max)});
  }
  normalize_exposure(env, exposure_reference ? *exposure_reference : object, o.mean_min, o.mean_max);
  return env;
}

LightingEnvironment rotate_environment(const LightingEnvironment& env, const Mat3& rotation, const Vec3& center) {
  mesh::require_rotation(rotation);
  LightingEnvironment out = env;
  for (auto& l : out.lights) l.position = center + rotation * (l.position - center);
  return out;
}

LightingEnvironment translate_environment(const LightingEnvironment& env, const Vec3& offset) {
  LightingEnvironment out = env;
  for (auto& l : out.lights) l.position += offset;
  return out;
}

Mat3 random_rotation(Rng& rng) {
  const double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  Eigen::Quaterniond q(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
  return q.normalized().toRotationMatrix();
}

nlohmann::json to_json(const LightingEnvironment& env) {
  nlohmann::json lights = nlohmann::json::array();
  for (const auto& l : env.lights) {
    lights.push_back({{"position", {l.position.x(), l.position.y(), l.position.z()}}, {"intensity", l.intensity}});
  }
  return {{"seed", env.seed}, {"lights", lights}};
}

LightingEnvironment environment_from_json(const nlohmann::json& j) {
  LightingEnvironment env;
  env.seed = j.value("seed", std::uint64_t{0});
  for (const auto& l : j.at("lights")) {
    const auto& p = l.at("position");
    if (p.size() != 3) throw std::invalid_argument("light position must have three components");
    env.lights.push_back({Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>()), l.at("intensity").get<double>()});
  }
  validate(env);
  return env;
}

void save_environment(const std::string& path, const LightingEnvironment& env) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(env).dump(2) << '\n';
}

LightingEnvironment load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return environment_from_json(nlohmann::json::parse(in));
}

}  // namespace planelit::lighting
