#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "planelit/types.hpp"

namespace planelit::lighting {

/// Equirectangular radiance image. Row y covers polar angle
/// theta = pi * (y + 0.5) / height measured from +z; column x covers azimuth
/// phi = 2 pi * (x + 0.5) / width.
struct EnvironmentMap {
  int width = 0;
  int height = 0;
  Matrix pixels;  // (height * width) x 3, linear RGB, row-major scanlines

  EnvironmentMap() = default;
  EnvironmentMap(int w, int h) : width(w), height(h), pixels(Matrix::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}

  auto pixel(int x, int y) { return pixels.row(static_cast<Eigen::Index>(y) * width + x); }
  auto pixel(int x, int y) const { return pixels.row(static_cast<Eigen::Index>(y) * width + x); }
};

/// Unit direction through the center of texel (x, y).
Vec3 texel_direction(int x, int y, int width, int height);
/// Solid angle of a texel in row y: (2 pi / W)(pi / H) sin(theta).
double texel_solid_angle(int y, int width, int height);

using Rgbe = std::array<std::uint8_t, 4>;

/// channel = (mantissa + 0.5) / 256 * 2^(e - 128); e == 0 decodes to black.
Vec3 rgbe_to_rgb(const Rgbe& p);
Rgbe rgb_to_rgbe(const Vec3& rgb);

/// Radiance RGBE (.hdr). Accepts flat and new-style run-length scanlines,
/// "-Y H +X W" orientation only. Errors name the reason.
EnvironmentMap parse_hdr(std::span<const std::uint8_t> bytes);
EnvironmentMap read_hdr(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_hdr(const EnvironmentMap& map, bool run_length = true);
void write_hdr(const std::filesystem::path& path, const EnvironmentMap& map, bool run_length = true);

}  // namespace planelit::lighting
