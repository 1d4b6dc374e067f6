#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "planelit/lighting/environment.hpp"
#include "planelit/lighting/estimate.hpp"

namespace planelit::dataset {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// One lighting condition rendered on the plane and on the object. All fields
/// share the same environment; the object sits at the origin, the plane at
/// z = -1 beneath it.
struct Sample {
  lighting::LightingEnvironment environment;
  Mat3 rotation = Mat3::Identity();  // perturbation applied for the rotated_* fields
  Matrix3X plane_oi;                 // analytic
  Matrix3X plane_oi_estimated;       // recovered from plane_intensity
  Matrix plane_intensity;            // N_plane x 1
  Matrix3X object_oi;                // canonical pose
  Matrix object_intensity;           // N_obj x 1
  Matrix3X rotated_oi;               // object rotated by `rotation`, lights fixed
  Matrix rotated_intensity;
};

/// Computes every field of a sample. `plane` must already sit at its scene position.
Sample compute_sample(const lighting::LightingEnvironment& env, const Mat3& rotation, const mesh::Mesh& object,
                      const mesh::Mesh& plane, const lighting::EstimateOptions& estimate = {});

/// ILSM layout, little endian: "ILSM", u32 version, u64 environment seed,
/// u32 field count, then per field u32 rows, u32 cols and rows*cols float64
/// row-major values. Fields: lights (K x 4: position, intensity), rotation,
/// plane_oi, plane_oi_estimated, plane_intensity, object_oi,
/// object_intensity, rotated_oi, rotated_intensity.
std::vector<std::uint8_t> encode_sample(const Sample& s);
Sample decode_sample(std::span<const std::uint8_t> bytes);
void write_sample(const std::filesystem::path& path, const Sample& s);
Sample read_sample(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

struct ManifestEntry {
  std::string file;  // relative to the dataset directory
  std::uint32_t crc32 = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::uint64_t master_seed = 0;
  std::string source;  // "synthetic" or "real"
  std::string object;  // mesh identifier
  std::string plane;
  std::array<double, 3> fractions{0.82, 0.09, 0.09};
  std::uint64_t split_seed = 0;
  std::vector<ManifestEntry> samples;
  nlohmann::json settings = nlohmann::json::object();  // generation parameters
  std::vector<std::string> skipped;                     // inputs rejected during ingestion

  std::size_t count(Split s) const;
  std::vector<std::size_t> indices(Split s) const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Deterministic shuffled partition. Fractions must be non-negative and sum
/// to 1; counts are rounded for train and val, test takes the rest. Throws if
/// any split comes out empty.
DatasetManifest split(DatasetManifest m, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Relative paths of samples whose bytes no longer match the manifest CRC.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir, const DatasetManifest& m);

struct GenerateOptions {
  std::uint64_t master_seed = 0;
  int count = 500;
  std::string object = "icosphere2";
  std::string plane = "plane32";
  double plane_extent = 4.0;
  int jobs = 1;
  lighting::SamplingOptions sampling;
  lighting::EstimateOptions estimate;
  std::array<double, 3> fractions{0.82, 0.09, 0.09};
};

/// Draws `count` environments from derived seeds, renders each on both meshes
/// plus a uniformly random rotation of the object, and writes
/// dir/samples/NNNNNN.ilsm and dir/manifest.json. Same options, same bytes.
DatasetManifest generate_synthetic(const std::filesystem::path& dir, const GenerateOptions& options);

struct IngestOptions {
  std::uint64_t master_seed = 0;
  int rotations = 3;
  int lights = 32;
  double light_radius = 4.0;
  std::string object = "icosphere2";
  std::string plane = "plane32";
  double plane_extent = 4.0;
  int jobs = 1;
  double exposure_min = 0.2;
  double exposure_max = 0.8;
  lighting::EstimateOptions estimate;
  std::array<double, 3> fractions{0.82, 0.09, 0.09};
};

/// Per map: median cut to `lights` point lights around the object, exposure
/// normalized over the support plane, then `rotations` copies rotated by random
/// azimuths about the vertical axis. Unreadable maps are skipped and listed
/// in the manifest.
DatasetManifest ingest_real(const std::vector<std::filesystem::path>& hdr_files, const std::filesystem::path& dir,
                            const IngestOptions& options);

/// The scene meshes a manifest was generated with: object at the origin and
/// the plane translated to its support height.
struct SceneMeshes {
  mesh::Mesh object;
  mesh::Mesh plane;
};
SceneMeshes scene_meshes(const DatasetManifest& m);

/// Reads every sample of one split, verifying checksums.
std::vector<Sample> load_split(const std::filesystem::path& dir, const DatasetManifest& m, Split s);

}  // namespace planelit::dataset
