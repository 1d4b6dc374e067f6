#pragma once

#include <string>

#include "planelit/render/image.hpp"
#include "planelit/render/scene.hpp"

namespace planelit::render {

/// Normalized sum of L(v) over the `fraction` of vertices with the largest
/// |L(v)| (at least one vertex). Throws for an all-zero field.
Vec3 dominant_light_direction(const Matrix& oi, double fraction = 0.1);

struct ShadowOptions {
  double strength = 0.6;       // darkening at full coverage
  double blur_factor = 0.05;   // Gaussian sigma per unit projection distance
  double min_elevation = 0.05; // required light_dir . normal
  int resolution = 256;        // texels along the longer side of the footprint
};

/// Planar shadow of an object, stored as a soft darkening map in plane coordinates.
struct Shadow {
  bool emitted = false;
  std::string warning;
  Matrix3X projected;  // object vertices projected onto the plane, world frame
  Vector distance;     // projection distance per vertex
  double strength = 0.0;
  double a0 = 0.0, b0 = 0.0, texel = 1.0;  // plane coords of texel (0, 0) center, texel size
  Matrix coverage;                         // rows along b, cols along a; blurred, in [0, 1]

  /// strength * coverage at plane coordinates (a, b), bilinear; exactly 0 off the footprint.
  double darkening(double a, double b) const;
};

/// p moved along -light_dir onto the plane.
Vec3 project_to_plane(const Vec3& p, const PlanePose& plane, const Vec3& light_dir);

/// Projects every vertex along -light_dir and rasterizes the projected
/// triangles. Each covered texel is blurred with sigma = blur_factor times the
/// projection distance of the nearest occluder there. A light within
/// min_elevation of the horizon yields no shadow and a warning.
Shadow cast_shadow(const mesh::Mesh& object, const PlanePose& plane, const Vec3& light_dir,
                   const ShadowOptions& options = {});

/// Darkens pixels whose camera ray hits the plane inside the shadow by
/// (1 - darkening), then z-buffers the object with perspective-correct Gouraud
/// interpolation of linear per-vertex intensities (N x 1 or N x 3), writing
/// 8-bit sRGB. Pixels touched by neither keep their input bytes. An empty
/// object returns the input; an object entirely outside the view is rejected.
Image composite(const Image& image, const mesh::Mesh& object, const Matrix& intensities, const PlanePose& plane,
                const CameraPose& camera, const Shadow* shadow);

}  // namespace planelit::render
