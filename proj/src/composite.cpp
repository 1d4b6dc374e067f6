#include "planelit/render/composite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace planelit::render {

namespace {

constexpr double kNear = 1e-6;

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

struct Projected {
  Eigen::Vector2d pixel;
  double depth = 0.0;
  bool front = false;
};

}  // namespace

Vec3 dominant_light_direction(const Matrix& oi, double fraction) {
  if (oi.cols() != 3 || oi.rows() == 0) throw std::invalid_argument("dominant_light_direction: expected an N x 3 field");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("dominant_light_direction: fraction in (0, 1]");
  const Vector mag = oi.rowwise().norm();
  if (!mag.allFinite() || mag.maxCoeff() <= 0.0) {
    throw std::invalid_argument("dominant_light_direction: field is zero everywhere");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(oi.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return mag(a) > mag(b); });
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(oi.rows()))));
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < k; ++i) sum += oi.row(order[i]).transpose();
  if (sum.norm() <= 0.0) throw std::invalid_argument("dominant_light_direction: dominant region cancels out");
  return sum.normalized();
}

Vec3 project_to_plane(const Vec3& p, const PlanePose& plane, const Vec3& light_dir) {
  const double elevation = light_dir.dot(plane.normal);
  if (std::abs(elevation) < 1e-12) throw std::invalid_argument("project_to_plane: light parallel to the plane");
  return p - plane.height(p) / elevation * light_dir;
}

double Shadow::darkening(double a, double b) const {
  if (!emitted || coverage.size() == 0) return 0.0;
  const double fx = (a - a0) / texel, fy = (b - b0) / texel;
  if (!(fx >= 0.0 && fy >= 0.0 && fx <= coverage.cols() - 1.0 && fy <= coverage.rows() - 1.0)) return 0.0;
  const Eigen::Index x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fx), coverage.cols() - 2);
  const Eigen::Index y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fy), coverage.rows() - 2);
  const double tx = fx - x0, ty = fy - y0;
  const double top = (1 - tx) * coverage(y0, x0) + tx * coverage(y0, x0 + 1);
  const double bottom = (1 - tx) * coverage(y0 + 1, x0) + tx * coverage(y0 + 1, x0 + 1);
  return strength * ((1 - ty) * top + ty * bottom);
}

Shadow cast_shadow(const mesh::Mesh& object, const PlanePose& plane, const Vec3& light_dir,
                   const ShadowOptions& options) {
  plane.validate();
  if (!(light_dir.norm() > 0.0) || !light_dir.allFinite()) throw std::invalid_argument("cast_shadow: bad light direction");
  if (options.resolution < 2) throw std::invalid_argument("cast_shadow: resolution must be >= 2");
  const Vec3 l = light_dir.normalized();
  Shadow s;
  s.strength = options.strength;
  const double elevation = l.dot(plane.normal);
  if (elevation <= options.min_elevation) {
    s.warning = "light elevation " + std::to_string(elevation) + " is at or below " +
                std::to_string(options.min_elevation) + "; no shadow cast";
    return s;
  }
  const Eigen::Index n = object.size();
  if (n == 0) return s;

  s.projected.resize(n, 3);
  s.distance.resize(n);
  Matrix coords(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = object.vertices().row(i).transpose();
    const Vec3 q = project_to_plane(p, plane, l);
    s.projected.row(i) = q.transpose();
    s.distance(i) = (p - q).norm();
    coords.row(i) = plane.coords(q).transpose();
  }
  const Eigen::Vector2d lo = coords.colwise().minCoeff().transpose(), hi = coords.colwise().maxCoeff().transpose();
  const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-9});
  s.texel = span / options.resolution;
  const double pad = 3.0 * options.blur_factor * s.distance.maxCoeff() + 2.0 * s.texel;
  s.a0 = lo.x() - pad;
  s.b0 = lo.y() - pad;
  const auto nx = static_cast<Eigen::Index>(std::ceil((hi.x() - lo.x() + 2 * pad) / s.texel)) + 1;
  const auto ny = static_cast<Eigen::Index>(std::ceil((hi.y() - lo.y() + 2 * pad) / s.texel)) + 1;

  // Nearest occluder distance per covered texel.
  constexpr double kUncovered = std::numeric_limits<double>::infinity();
  Matrix nearest = Matrix::Constant(ny, nx, kUncovered);
  for (Eigen::Index f = 0; f < object.faces().rows(); ++f) {
    std::array<Eigen::Vector2d, 3> p;
    std::array<double, 3> d;
    for (int k = 0; k < 3; ++k) {
      const int v = object.faces()(f, k);
      p[static_cast<std::size_t>(k)] = Eigen::Vector2d((coords(v, 0) - s.a0) / s.texel, (coords(v, 1) - s.b0) / s.texel);
      d[static_cast<std::size_t>(k)] = s.distance(v);
    }
    const double area = edge(p[0], p[1], p[2]);
    if (std::abs(area) < 1e-12) continue;
    const auto x_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}))));
    const auto x_hi = std::min<Eigen::Index>(nx - 1, static_cast<Eigen::Index>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}))));
    const auto y_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}))));
    const auto y_hi = std::min<Eigen::Index>(ny - 1, static_cast<Eigen::Index>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}))));
    for (Eigen::Index y = y_lo; y <= y_hi; ++y) {
      for (Eigen::Index x = x_lo; x <= x_hi; ++x) {
        const Eigen::Vector2d c(static_cast<double>(x), static_cast<double>(y));
        const double w0 = edge(p[1], p[2], c) / area, w1 = edge(p[2], p[0], c) / area, w2 = edge(p[0], p[1], c) / area;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        nearest(y, x) = std::min(nearest(y, x), w0 * d[0] + w1 * d[1] + w2 * d[2]);
      }
    }
  }

  // Scatter each covered texel with its own normalized Gaussian footprint.
  s.coverage = Matrix::Zero(ny, nx);
  std::vector<double> weights;
  for (Eigen::Index y = 0; y < ny; ++y) {
    for (Eigen::Index x = 0; x < nx; ++x) {
      if (nearest(y, x) == kUncovered) continue;
      const double sigma = options.blur_factor * nearest(y, x) / s.texel;
      const auto r = static_cast<Eigen::Index>(std::ceil(3.0 * sigma));
      if (r == 0) {
        s.coverage(y, x) += 1.0;
        continue;
      }
      // Separable kernel: 2D weight is the product of two normalized 1D weights.
      weights.resize(static_cast<std::size_t>(2 * r + 1));
      double total = 0.0;
      for (Eigen::Index k = -r; k <= r; ++k) {
        const double g = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
        weights[static_cast<std::size_t>(k + r)] = g;
        total += g;
      }
      for (double& g : weights) g /= total;
      for (Eigen::Index dy = -r; dy <= r; ++dy) {
        const Eigen::Index yy = y + dy;
        if (yy < 0 || yy >= ny) continue;
        const double wy = weights[static_cast<std::size_t>(dy + r)];
        for (Eigen::Index dx = -r; dx <= r; ++dx) {
          const Eigen::Index xx = x + dx;
          if (xx < 0 || xx >= nx) continue;
          s.coverage(yy, xx) += wy * weights[static_cast<std::size_t>(dx + r)];
        }
      }
    }
  }
  s.coverage = s.coverage.cwiseMin(1.0);
  s.emitted = true;
  return s;
}

Image composite(const Image& image, const mesh::Mesh& object, const Matrix& intensities, const PlanePose& plane,
                const CameraPose& camera, const Shadow* shadow) {
  camera.validate();
  plane.validate();
  Image out = image;
  const Eigen::Index n = object.size();
  if (n == 0) return out;
  if (intensities.rows() != n || (intensities.cols() != 1 && intensities.cols() != 3)) {
    throw std::invalid_argument("composite: expected N x 1 or N x 3 intensities for " + std::to_string(n) + " vertices");
  }
  const int width = image.width, height = image.height;

  std::vector<Projected> proj(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 c = camera.to_camera(object.vertices().row(i).transpose());
    Projected& p = proj[static_cast<std::size_t>(i)];
    p.depth = c.z();
    p.front = c.z() > kNear;
    if (p.front) p.pixel = camera.project(c);
  }
  bool visible = false;
  for (Eigen::Index f = 0; f < object.faces().rows() && !visible; ++f) {
    const auto& a = proj[static_cast<std::size_t>(object.faces()(f, 0))];
    const auto& b = proj[static_cast<std::size_t>(object.faces()(f, 1))];
    const auto& c = proj[static_cast<std::size_t>(object.faces()(f, 2))];
    if (!a.front || !b.front || !c.front) continue;
    visible = std::max({a.pixel.x(), b.pixel.x(), c.pixel.x()}) >= 0.0 &&
              std::min({a.pixel.x(), b.pixel.x(), c.pixel.x()}) <= width &&
              std::max({a.pixel.y(), b.pixel.y(), c.pixel.y()}) >= 0.0 &&
              std::min({a.pixel.y(), b.pixel.y(), c.pixel.y()}) <= height;
  }
  if (!visible) throw std::invalid_argument("composite: object lies entirely outside the camera frustum");

  if (shadow != nullptr && shadow->emitted) {
    const Vec3 eye = camera.center();
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Vec3 dir = camera.ray(x + 0.5, y + 0.5);
        const auto t = plane.intersect(eye, dir);
        if (!t) continue;
        const Eigen::Vector2d ab = plane.coords(eye + *t * dir);
        if (!plane.contains(ab.x(), ab.y())) continue;
        const double dark = shadow->darkening(ab.x(), ab.y());
        if (!(dark > 0.0)) continue;
        std::uint8_t* px = out.pixel(x, y);
        for (int c = 0; c < 3; ++c) px[c] = linear_to_srgb(srgb_to_linear(px[c]) * (1.0 - dark));
      }
    }
  }

  std::vector<double> zbuf(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                           std::numeric_limits<double>::infinity());
  for (Eigen::Index f = 0; f < object.faces().rows(); ++f) {
    const std::array<int, 3> v{object.faces()(f, 0), object.faces()(f, 1), object.faces()(f, 2)};
    const Projected& p0 = proj[static_cast<std::size_t>(v[0])];
    const Projected& p1 = proj[static_cast<std::size_t>(v[1])];
    const Projected& p2 = proj[static_cast<std::size_t>(v[2])];
    if (!p0.front || !p1.front || !p2.front) continue;
    const double area = edge(p0.pixel, p1.pixel, p2.pixel);
    if (std::abs(area) < 1e-12) continue;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({p0.pixel.x(), p1.pixel.x(), p2.pixel.x()}))));
    const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(std::max({p0.pixel.x(), p1.pixel.x(), p2.pixel.x()}))));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({p0.pixel.y(), p1.pixel.y(), p2.pixel.y()}))));
    const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(std::max({p0.pixel.y(), p1.pixel.y(), p2.pixel.y()}))));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const Eigen::Vector2d c(x + 0.5, y + 0.5);
        const double w0 = edge(p1.pixel, p2.pixel, c) / area;
        const double w1 = edge(p2.pixel, p0.pixel, c) / area;
        const double w2 = edge(p0.pixel, p1.pixel, c) / area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double q0 = w0 / p0.depth, q1 = w1 / p1.depth, q2 = w2 / p2.depth;
        const double depth = 1.0 / (q0 + q1 + q2);
        double& z = zbuf[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
        if (depth >= z) continue;
        z = depth;
        std::uint8_t* px = out.pixel(x, y);
        for (int ch = 0; ch < 3; ++ch) {
          const Eigen::Index col = intensities.cols() == 3 ? ch : 0;
          const double value = (q0 * intensities(v[0], col) + q1 * intensities(v[1], col) + q2 * intensities(v[2], col)) * depth;
          px[ch] = linear_to_srgb(value);
        }
      }
    }
  }
  return out;
}

}  // namespace planelit::render
