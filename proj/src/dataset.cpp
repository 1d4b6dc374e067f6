#include "planelit/dataset/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <zlib.h>

#include "planelit/lighting/hdr.hpp"
#include "planelit/lighting/median_cut.hpp"

namespace planelit::dataset {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr double kLightClearance = 0.5;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void field(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) u64(std::bit_cast<std::uint64_t>(m(i, k)));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  Matrix field(const char* name) {
    const std::uint32_t rows = u32(), cols = u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > bytes_.size() - pos_) {
      throw std::runtime_error(std::string("ILSM: field ") + name + " truncated");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = std::bit_cast<double>(u64());
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("ILSM: unexpected end of data");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Matrix3X as_n3(Matrix m, const char* name) {
  if (m.cols() != 3) throw std::runtime_error(std::string("ILSM: field ") + name + " must have 3 columns");
  return m;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string sample_name(std::size_t i) {
  std::ostringstream s;
  s << "samples/" << std::setw(6) << std::setfill('0') << i << ".ilsm";
  return s.str();
}

std::string crc_hex(std::uint32_t crc) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << crc;
  return s.str();
}

// Runs body(i) for i in [0, count) on `jobs` threads; the first exception wins.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

lighting::SupportPlane support_plane() { return {Vec3(0, 0, mesh::kSupportHeight), Vec3::UnitZ(), kLightClearance}; }

Mat3 rotation_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

// Writes samples produced by make(i) and returns the finished, split manifest.
DatasetManifest write_dataset(const std::filesystem::path& dir, DatasetManifest m, std::size_t count, int jobs,
                              const std::function<Sample(std::size_t)>& make) {
  std::filesystem::create_directories(dir / "samples");
  m.samples.assign(count, ManifestEntry{});
  parallel_for(count, jobs, [&](std::size_t i) {
    const std::vector<std::uint8_t> bytes = encode_sample(make(i));
    ManifestEntry& e = m.samples[i];
    e.file = sample_name(i);
    e.crc32 = crc32_of(bytes);
    write_bytes(dir / e.file, bytes);
  });
  m = split(std::move(m), m.fractions, m.split_seed);
  write_manifest(dir, m);
  return m;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

Sample compute_sample(const lighting::LightingEnvironment& env, const Mat3& rotation, const mesh::Mesh& object,
                      const mesh::Mesh& plane, const lighting::EstimateOptions& estimate) {
  Sample s;
  s.environment = env;
  s.rotation = rotation;
  s.plane_oi = lighting::compute_oi(plane, env);
  s.plane_intensity = lighting::reflected_radiance(s.plane_oi, plane.normals());
  s.plane_oi_estimated = lighting::estimate_plane_oi(plane, s.plane_intensity, estimate);
  s.object_oi = lighting::compute_oi(object, env);
  s.object_intensity = lighting::reflected_radiance(s.object_oi, object.normals());
  const mesh::Mesh rotated = mesh::rotate_mesh(object, rotation);
  s.rotated_oi = lighting::compute_oi(rotated, env);
  s.rotated_intensity = lighting::reflected_radiance(s.rotated_oi, rotated.normals());
  return s;
}

std::vector<std::uint8_t> encode_sample(const Sample& s) {
  Writer w;
  for (char c : {'I', 'L', 'S', 'M'}) w.bytes.push_back(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u64(s.environment.seed);
  w.u32(9);
  Matrix lights(static_cast<Eigen::Index>(s.environment.lights.size()), 4);
  for (std::size_t k = 0; k < s.environment.lights.size(); ++k) {
    const auto& l = s.environment.lights[k];
    lights.row(static_cast<Eigen::Index>(k)) << l.position.transpose(), l.intensity;
  }
  w.field(lights);
  w.field(s.rotation);
  w.field(s.plane_oi);
  w.field(s.plane_oi_estimated);
  w.field(s.plane_intensity);
  w.field(s.object_oi);
  w.field(s.object_intensity);
  w.field(s.rotated_oi);
  w.field(s.rotated_intensity);
  return std::move(w.bytes);
}

Sample decode_sample(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ILSM", 4) != 0) throw std::runtime_error("ILSM: bad magic");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw std::runtime_error("ILSM: unsupported version " + std::to_string(version));
  Sample s;
  s.environment.seed = r.u64();
  const std::uint32_t fields = r.u32();
  if (fields != 9) throw std::runtime_error("ILSM: expected 9 fields, found " + std::to_string(fields));
  const Matrix lights = r.field("lights");
  if (lights.cols() != 4) throw std::runtime_error("ILSM: lights must have 4 columns");
  for (Eigen::Index k = 0; k < lights.rows(); ++k) {
    s.environment.lights.push_back({lights.row(k).head<3>().transpose(), lights(k, 3)});
  }
  const Matrix rot = r.field("rotation");
  if (rot.rows() != 3 || rot.cols() != 3) throw std::runtime_error("ILSM: rotation must be 3x3");
  s.rotation = rot;
  s.plane_oi = as_n3(r.field("plane_oi"), "plane_oi");
  s.plane_oi_estimated = as_n3(r.field("plane_oi_estimated"), "plane_oi_estimated");
  s.plane_intensity = r.field("plane_intensity");
  s.object_oi = as_n3(r.field("object_oi"), "object_oi");
  s.object_intensity = r.field("object_intensity");
  s.rotated_oi = as_n3(r.field("rotated_oi"), "rotated_oi");
  s.rotated_intensity = r.field("rotated_intensity");
  if (!r.done()) throw std::runtime_error("ILSM: trailing bytes");
  if (s.plane_intensity.rows() != s.plane_oi.rows() || s.object_intensity.rows() != s.object_oi.rows() ||
      s.rotated_intensity.rows() != s.rotated_oi.rows()) {
    throw std::runtime_error("ILSM: intensity and OI field sizes disagree");
  }
  return s;
}

void write_sample(const std::filesystem::path& path, const Sample& s) { write_bytes(path, encode_sample(s)); }

Sample read_sample(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_sample(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : m.samples) files.push_back({{"file", e.file}, {"crc32", crc_hex(e.crc32)}, {"split", split_name(e.split)}});
  return {{"format", "ILSM"},
          {"version", kVersion},
          {"master_seed", m.master_seed},
          {"source", m.source},
          {"object", m.object},
          {"plane", m.plane},
          {"counts",
           {{"train", m.count(Split::Train)},
            {"val", m.count(Split::Val)},
            {"test", m.count(Split::Test)},
            {"total", m.samples.size()}}},
          {"fractions", m.fractions},
          {"split_seed", m.split_seed},
          {"settings", m.settings},
          {"skipped", m.skipped},
          {"samples", files}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ILSM") throw std::runtime_error("manifest: not an ILSM dataset");
  DatasetManifest m;
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.source = j.value("source", "synthetic");
  m.object = j.at("object").get<std::string>();
  m.plane = j.at("plane").get<std::string>();
  m.fractions = j.value("fractions", m.fractions);
  m.split_seed = j.value("split_seed", m.master_seed);
  m.settings = j.value("settings", nlohmann::json::object());
  m.skipped = j.value("skipped", std::vector<std::string>{});
  for (const auto& f : j.at("samples")) {
    ManifestEntry e;
    e.file = f.at("file").get<std::string>();
    e.crc32 = static_cast<std::uint32_t>(std::stoul(f.at("crc32").get<std::string>(), nullptr, 16));
    e.split = split_from_name(f.value("split", "train"));
    m.samples.push_back(std::move(e));
  }
  const auto& counts = j.at("counts");
  if (counts.at("total").get<std::size_t>() != m.samples.size() ||
      counts.at("train").get<std::size_t>() != m.count(Split::Train) ||
      counts.at("val").get<std::size_t>() != m.count(Split::Val) ||
      counts.at("test").get<std::size_t>() != m.count(Split::Test)) {
    throw std::runtime_error("manifest: counts do not match the file list");
  }
  return m;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << to_json(m).dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot read " + (dir / "manifest.json").string());
  return manifest_from_json(nlohmann::json::parse(in));
}

DatasetManifest split(DatasetManifest m, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::any_of(fractions.begin(), fractions.end(), [](double f) { return !(f >= 0.0); }) ||
      std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
  }
  const std::size_t n = m.samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw std::invalid_argument("split: " + std::to_string(n) + " samples leave a split empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  for (std::size_t k = 0; k < n; ++k) {
    m.samples[order[k]].split = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
  }
  m.fractions = fractions;
  m.split_seed = seed;
  return m;
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::vector<std::string> bad;
  for (const auto& e : m.samples) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(dir / e.file, ec) || crc32_of(read_bytes(dir / e.file)) != e.crc32) {
      bad.push_back(e.file);
    }
  }
  return bad;
}

SceneMeshes scene_meshes(const DatasetManifest& m) {
  const double extent = m.settings.value("plane_extent", 4.0);
  return {mesh::mesh_from_spec(m.object),
          mesh::translate_mesh(mesh::mesh_from_spec(m.plane, extent), Vec3(0, 0, mesh::kSupportHeight))};
}

DatasetManifest generate_synthetic(const std::filesystem::path& dir, const GenerateOptions& o) {
  if (o.count < 1) throw std::invalid_argument("generate_synthetic: count must be >= 1");
  DatasetManifest m;
  m.master_seed = o.master_seed;
  m.source = "synthetic";
  m.object = o.object;
  m.plane = o.plane;
  m.fractions = o.fractions;
  m.split_seed = o.master_seed;
  lighting::SamplingOptions sampling = o.sampling;
  sampling.support = support_plane();
  m.settings = {{"plane_extent", o.plane_extent},
                {"lights", sampling.count},
                {"radius", {sampling.radius_min, sampling.radius_max}},
                {"intensity", {sampling.intensity_min, sampling.intensity_max}},
                {"exposure", {sampling.mean_min, sampling.mean_max}},
                {"exposure_reference", "plane"},
                {"support_clearance", kLightClearance},
                {"estimate", {{"smoothing", o.estimate.smoothing}, {"iterations", o.estimate.iterations}}}};
  const SceneMeshes scene = scene_meshes(m);
  return write_dataset(dir, std::move(m), static_cast<std::size_t>(o.count), o.jobs, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(o.master_seed, i);
    const auto env = lighting::sample_lighting_environment(seed, scene.object, sampling, &scene.plane);
    Rng rot_rng(derive_seed(seed, 1));
    return compute_sample(env, lighting::random_rotation(rot_rng), scene.object, scene.plane, o.estimate);
  });
}

DatasetManifest ingest_real(const std::vector<std::filesystem::path>& hdr_files, const std::filesystem::path& dir,
                            const IngestOptions& o) {
  if (o.rotations < 0) throw std::invalid_argument("ingest_real: rotations must be >= 0");
  DatasetManifest m;
  m.master_seed = o.master_seed;
  m.source = "real";
  m.object = o.object;
  m.plane = o.plane;
  m.fractions = o.fractions;
  m.split_seed = o.master_seed;
  m.settings = {{"plane_extent", o.plane_extent},
                {"lights", o.lights},
                {"light_radius", o.light_radius},
                {"rotations", o.rotations},
                {"exposure", {o.exposure_min, o.exposure_max}},
                {"exposure_reference", "plane"},
                {"estimate", {{"smoothing", o.estimate.smoothing}, {"iterations", o.estimate.iterations}}}};
  const SceneMeshes scene = scene_meshes(m);

  std::vector<lighting::LightingEnvironment> envs;
  for (std::size_t f = 0; f < hdr_files.size(); ++f) {
    lighting::LightingEnvironment base;
    try {
      const lighting::EnvironmentMap map = lighting::read_hdr(hdr_files[f]);
      base = lighting::median_cut(map, o.lights, o.light_radius, scene.object.centroid()).environment;
      if (base.total_intensity() <= 0.0) throw std::runtime_error("map carries no energy");
      lighting::normalize_exposure(base, scene.plane, o.exposure_min, o.exposure_max);
    } catch (const std::exception& e) {
      m.skipped.push_back(hdr_files[f].string() + ": " + e.what());
      continue;
    }
    const std::uint64_t map_seed = derive_seed(o.master_seed, f);
    base.seed = map_seed;
    envs.push_back(base);
    Rng rng(map_seed);
    for (int k = 0; k < o.rotations; ++k) {
      auto rotated = lighting::rotate_environment(base, rotation_z(uniform(rng, 0.0, 2.0 * std::numbers::pi)),
                                                  scene.object.centroid());
      rotated.seed = derive_seed(map_seed, static_cast<std::uint64_t>(k) + 1);
      envs.push_back(std::move(rotated));
    }
  }
  if (envs.empty()) throw std::runtime_error("ingest_real: no readable environment maps");
  return write_dataset(dir, std::move(m), envs.size(), o.jobs, [&](std::size_t i) {
    Rng rot_rng(derive_seed(envs[i].seed, 0x5eed));
    return compute_sample(envs[i], lighting::random_rotation(rot_rng), scene.object, scene.plane, o.estimate);
  });
}

std::vector<Sample> load_split(const std::filesystem::path& dir, const DatasetManifest& m, Split s) {
  std::vector<Sample> out;
  for (std::size_t i : m.indices(s)) {
    const ManifestEntry& e = m.samples[i];
    const auto bytes = read_bytes(dir / e.file);
    if (crc32_of(bytes) != e.crc32) throw std::runtime_error(e.file + ": checksum mismatch");
    out.push_back(decode_sample(bytes));
  }
  return out;
}

}  // namespace planelit::dataset
