#include "planelit/lighting/median_cut.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace planelit::lighting {

Vector texel_energy(const EnvironmentMap& map) {
  Vector e(static_cast<Eigen::Index>(map.width) * map.height);
  for (int y = 0; y < map.height; ++y) {
    const double dw = texel_solid_angle(y, map.width, map.height);
    for (int x = 0; x < map.width; ++x) {
      const Vec3 rgb = map.pixel(x, y).transpose();
      if (!rgb.allFinite() || (rgb.array() < 0.0).any()) {
        throw std::invalid_argument("median_cut: negative or non-finite radiance at texel (" + std::to_string(x) +
                                    "," + std::to_string(y) + ")");
      }
      e(static_cast<Eigen::Index>(y) * map.width + x) = luminance(rgb) * dw;
    }
  }
  return e;
}

namespace {

struct Summed {
  // Inclusive-exclusive 2D prefix sums over energy.
  Matrix table;
  double sum(int x0, int y0, int x1, int y1) const {
    return table(y1, x1) - table(y0, x1) - table(y1, x0) + table(y0, x0);
  }
};

Summed prefix(const Vector& e, int w, int h) {
  Summed s;
  s.table = Matrix::Zero(h + 1, w + 1);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += e(static_cast<Eigen::Index>(y) * w + x);
      s.table(y + 1, x + 1) = s.table(y, x + 1) + row;
    }
  }
  return s;
}

void split(const Summed& s, const MedianCutRegion& r, int width, int height, MedianCutRegion& a, MedianCutRegion& b) {
  const int w = r.x1 - r.x0, h = r.y1 - r.y0;
  const double theta = std::numbers::pi * (0.5 * (r.y0 + r.y1)) / height;
  // Angular extents in units of one polar texel: azimuth spans 2 pi over W texels, polar spans pi over H.
  const double foreshortened_w = w * 2.0 * height / width * std::sin(theta);
  const bool cut_x = (foreshortened_w >= h && w > 1) || h == 1;
  const int len = cut_x ? w : h;
  if (len < 2) throw std::invalid_argument("median_cut: region cannot be split further; map too small for n");
  const double total = s.sum(r.x0, r.y0, r.x1, r.y1);
  int best = 1;
  double best_diff = INFINITY;
  double best_center = INFINITY;
  for (int k = 1; k < len; ++k) {
    const double left = cut_x ? s.sum(r.x0, r.y0, r.x0 + k, r.y1) : s.sum(r.x0, r.y0, r.x1, r.y0 + k);
    const double diff = std::abs(total - 2.0 * left);
    const double center = std::abs(2.0 * k - len);
    if (diff < best_diff || (diff == best_diff && center < best_center)) {
      best = k;
      best_diff = diff;
      best_center = center;
    }
  }
  a = r;
  b = r;
  if (cut_x) {
    a.x1 = r.x0 + best;
    b.x0 = r.x0 + best;
  } else {
    a.y1 = r.y0 + best;
    b.y0 = r.y0 + best;
  }
}

}  // namespace

MedianCutResult median_cut(const EnvironmentMap& map, int n, double light_radius, const Vec3& center) {
  if (n < 1 || (n & (n - 1)) != 0) throw std::invalid_argument("median_cut: n must be a power of two, got " + std::to_string(n));
  if (map.width <= 0 || map.height <= 0) throw std::invalid_argument("median_cut: empty map");
  if (static_cast<long>(n) > static_cast<long>(map.width) * map.height) {
    throw std::invalid_argument("median_cut: more regions requested than texels");
  }
  if (!(light_radius > 0.0)) throw std::invalid_argument("median_cut: light radius must be positive");
  const Vector energy = texel_energy(map);
  const double total = energy.sum();
  if (!(total > 0.0)) throw std::invalid_argument("median_cut: environment map is black");
  const Summed s = prefix(energy, map.width, map.height);

  std::vector<MedianCutRegion> regions{{0, 0, map.width, map.height}};
  while (static_cast<int>(regions.size()) < n) {
    std::vector<MedianCutRegion> next;
    next.reserve(regions.size() * 2);
    for (const auto& r : regions) {
      MedianCutRegion a, b;
      split(s, r, map.width, map.height, a, b);
      next.push_back(a);
      next.push_back(b);
    }
    regions = std::move(next);
  }

  MedianCutResult out;
  out.total_energy = total;
  for (auto& r : regions) {
    Vec3 dir = Vec3::Zero();
    double e = 0.0;
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const double te = energy(static_cast<Eigen::Index>(y) * map.width + x);
        e += te;
        dir += te * texel_direction(x, y, map.width, map.height);
      }
    }
    r.energy = e;
    if (e > 0.0 && dir.norm() > 0.0) {
      r.direction = dir.normalized();
    } else {
      // Geometric center of the rectangle in angle space.
      const double theta = std::numbers::pi * 0.5 * (r.y0 + r.y1) / map.height;
      const double phi = 2.0 * std::numbers::pi * 0.5 * (r.x0 + r.x1) / map.width;
      r.direction = Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
    }
    out.environment.lights.push_back({center + light_radius * r.direction, e});
  }
  out.regions = std::move(regions);
  return out;
}

}  // namespace planelit::lighting
