#include "planelit/lighting/hdr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace planelit::lighting {

Vec3 texel_direction(int x, int y, int width, int height) {
  const double theta = std::numbers::pi * (y + 0.5) / height;
  const double phi = 2.0 * std::numbers::pi * (x + 0.5) / width;
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

double texel_solid_angle(int y, int width, int height) {
  const double theta = std::numbers::pi * (y + 0.5) / height;
  return (2.0 * std::numbers::pi / width) * (std::numbers::pi / height) * std::sin(theta);
}

Vec3 rgbe_to_rgb(const Rgbe& p) {
  if (p[3] == 0) return Vec3::Zero();
  // (m + 0.5) / 256 * 2^(e - 128) == (m + 0.5) * 2^(e - 136), exact in binary64.
  const int e = static_cast<int>(p[3]) - 136;
  return {std::ldexp(p[0] + 0.5, e), std::ldexp(p[1] + 0.5, e), std::ldexp(p[2] + 0.5, e)};
}

Rgbe rgb_to_rgbe(const Vec3& rgb) {
  const double v = rgb.maxCoeff();
  if (!(v > 1e-38)) return {0, 0, 0, 0};
  int e = 0;
  const double f = std::frexp(v, &e);  // v = f * 2^e, f in [0.5, 1)
  if (e + 128 > 255) return {255, 255, 255, 255};
  if (e + 128 < 1) return {0, 0, 0, 0};
  const double scale = f * 256.0 / v;
  auto q = [&](double c) { return static_cast<std::uint8_t>(std::clamp(std::floor(std::max(c, 0.0) * scale), 0.0, 255.0)); };
  return {q(rgb.x()), q(rgb.y()), q(rgb.z()), static_cast<std::uint8_t>(e + 128)};
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  bool line(std::string& out) {
    if (pos_ >= bytes_.size()) return false;
    out.clear();
    while (pos_ < bytes_.size() && bytes_[pos_] != '\n') out.push_back(static_cast<char>(bytes_[pos_++]));
    if (pos_ < bytes_.size()) ++pos_;
    return true;
  }
  std::uint8_t byte(int y) {
    if (pos_ >= bytes_.size()) throw std::runtime_error("hdr: truncated scanline " + std::to_string(y));
    return bytes_[pos_++];
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* peek() const { return bytes_.data() + pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void read_scanline(Reader& r, int width, int y, std::vector<Rgbe>& line) {
  const bool rle = width >= 8 && width < 32768 && r.remaining() >= 4 && r.peek()[0] == 2 && r.peek()[1] == 2 &&
                   (r.peek()[2] & 0x80) == 0;
  if (!rle) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 4; ++c) line[static_cast<std::size_t>(x)][static_cast<std::size_t>(c)] = r.byte(y);
    }
    return;
  }
  r.byte(y);
  r.byte(y);
  const int encoded_width = (r.byte(y) << 8) | r.byte(y);
  if (encoded_width != width) throw std::runtime_error("hdr: scanline " + std::to_string(y) + " width mismatch");
  for (std::size_t c = 0; c < 4; ++c) {
    int x = 0;
    while (x < width) {
      int count = r.byte(y);
      if (count > 128) {
        count -= 128;
        if (x + count > width) throw std::runtime_error("hdr: run overflows scanline " + std::to_string(y));
        const std::uint8_t v = r.byte(y);
        for (int k = 0; k < count; ++k) line[static_cast<std::size_t>(x++)][c] = v;
      } else {
        if (count == 0 || x + count > width) throw std::runtime_error("hdr: bad literal run in scanline " + std::to_string(y));
        for (int k = 0; k < count; ++k) line[static_cast<std::size_t>(x++)][c] = r.byte(y);
      }
    }
  }
}

void encode_channel(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& data) {
  const std::size_t n = data.size();
  std::size_t i = 0;
  while (i < n) {
    // Find the next run of at least 4 equal bytes.
    std::size_t run_start = i, run_len = 0;
    while (run_start < n) {
      run_len = 1;
      while (run_start + run_len < n && run_len < 127 && data[run_start + run_len] == data[run_start]) ++run_len;
      if (run_len >= 4) break;
      run_start += run_len;
    }
    if (run_start >= n) run_len = 0;
    while (i < run_start) {
      const std::size_t lit = std::min<std::size_t>(128, run_start - i);
      out.push_back(static_cast<std::uint8_t>(lit));
      out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(i), data.begin() + static_cast<std::ptrdiff_t>(i + lit));
      i += lit;
    }
    if (run_len >= 4) {
      out.push_back(static_cast<std::uint8_t>(128 + run_len));
      out.push_back(data[run_start]);
      i = run_start + run_len;
    }
  }
}

}  // namespace

EnvironmentMap parse_hdr(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  std::string line;
  if (!r.line(line) || (line.rfind("#?RADIANCE", 0) != 0 && line.rfind("#?RGBE", 0) != 0)) {
    throw std::runtime_error("hdr: bad magic (expected #?RADIANCE)");
  }
  while (true) {
    if (!r.line(line)) throw std::runtime_error("hdr: truncated header");
    if (line.empty()) break;
    if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe") {
      throw std::runtime_error("hdr: unsupported format '" + line.substr(7) + "'");
    }
  }
  if (!r.line(line)) throw std::runtime_error("hdr: missing resolution line");
  std::istringstream rs(line);
  std::string ya, xa;
  int h = 0, w = 0;
  if (!(rs >> ya >> h >> xa >> w) || ya != "-Y" || xa != "+X") {
    throw std::runtime_error("hdr: unsupported orientation '" + line + "' (only -Y H +X W)");
  }
  if (h <= 0 || w <= 0) throw std::runtime_error("hdr: non-positive resolution");

  EnvironmentMap map(w, h);
  std::vector<Rgbe> scan(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    read_scanline(r, w, y, scan);
    for (int x = 0; x < w; ++x) map.pixel(x, y) = rgbe_to_rgb(scan[static_cast<std::size_t>(x)]).transpose();
  }
  return map;
}

EnvironmentMap read_hdr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hdr: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_hdr(bytes);
}

std::vector<std::uint8_t> encode_hdr(const EnvironmentMap& map, bool run_length) {
  std::vector<std::uint8_t> out;
  const std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(map.height) + " +X " +
                             std::to_string(map.width) + "\n";
  out.insert(out.end(), header.begin(), header.end());
  const bool rle = run_length && map.width >= 8 && map.width < 32768;
  std::vector<std::uint8_t> channel(static_cast<std::size_t>(map.width));
  std::vector<Rgbe> scan(static_cast<std::size_t>(map.width));
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) scan[static_cast<std::size_t>(x)] = rgb_to_rgbe(map.pixel(x, y).transpose());
    if (!rle) {
      for (const auto& p : scan) out.insert(out.end(), p.begin(), p.end());
      continue;
    }
    out.push_back(2);
    out.push_back(2);
    out.push_back(static_cast<std::uint8_t>(map.width >> 8));
    out.push_back(static_cast<std::uint8_t>(map.width & 0xFF));
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t x = 0; x < scan.size(); ++x) channel[x] = scan[x][c];
      encode_channel(out, channel);
    }
  }
  return out;
}

void write_hdr(const std::filesystem::path& path, const EnvironmentMap& map, bool run_length) {
  const auto bytes = encode_hdr(map, run_length);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("hdr: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace planelit::lighting
