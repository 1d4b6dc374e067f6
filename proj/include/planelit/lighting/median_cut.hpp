#pragma once

#include <vector>

#include "planelit/lighting/environment.hpp"
#include "planelit/lighting/hdr.hpp"

namespace planelit::lighting {

/// Rec. 709 luminance.
inline double luminance(const Vec3& rgb) { return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z(); }

/// Texel-aligned rectangle [x0, x1) x [y0, y1) of an equirectangular map.
struct MedianCutRegion {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double energy = 0.0;  // sum of luminance * solid angle
  Vec3 direction = Vec3::UnitZ();
};

struct MedianCutResult {
  LightingEnvironment environment;
  std::vector<MedianCutRegion> regions;
  double total_energy = 0.0;
};

/// Splits the solid-angle-weighted luminance image into `n` (a power of two)
/// regions of near-equal energy. Each cut runs across the region's longer side,
/// where the horizontal extent is foreshortened by sin(theta) at the region's
/// center row, and falls on the texel boundary that best balances the two
/// halves. Each region becomes a light at `center + light_radius * d`, where d
/// is the region's energy-weighted mean direction, with intensity equal to the
/// region's energy. Regions without energy yield a zero-intensity light at the
/// region's geometric center direction.
MedianCutResult median_cut(const EnvironmentMap& map, int n, double light_radius, const Vec3& center = Vec3::Zero());

/// Per-texel luminance times solid angle, (height*width) entries in scanline order.
Vector texel_energy(const EnvironmentMap& map);

}  // namespace planelit::lighting
