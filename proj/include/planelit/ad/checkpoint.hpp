#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "planelit/ad/layers.hpp"

namespace planelit::ad {

// Binary layout, all integers little-endian u32:
//   "ILNT" | version | { name_len | name (UTF-8) | rank | dims[rank] | f64 payload }*
// Entries run to end of file. Payload is row-major IEEE-754 binary64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

NamedTensor to_named(const std::string& name, const Matrix& m);
Matrix to_matrix(const NamedTensor& t);

/// Parameters by name, batch-norm statistics as "<name>.running_mean/var".
std::vector<NamedTensor> collect_entries(const StateRefs& refs);
/// Every entry named by `refs` must be present with a matching shape.
void apply_entries(const StateRefs& refs, const std::vector<NamedTensor>& entries);

}  // namespace planelit::ad
