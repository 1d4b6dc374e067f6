#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace planelit::render {

/// 8-bit sRGB image, interleaved RGB scanlines top to bottom.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  bool operator==(const Image&) const = default;
};

/// Neutral mid-gray canvas used when no photograph is supplied.
Image gray_backdrop(int width, int height);

/// IEC 61966-2-1 transfer functions.
double srgb_to_linear(std::uint8_t value);
std::uint8_t linear_to_srgb(double value);

/// Any PNG color type is converted to 8-bit RGB on read.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace planelit::render
