#include "planelit/ad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace planelit::ad {
namespace {

constexpr char kMagic[4] = {'I', 'L', 'N', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) return false;
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

[[noreturn]] void truncated(const std::string& what) {
  throw std::runtime_error("checkpoint: truncated while reading " + what);
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& entries) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const NamedTensor& e : entries) {
    std::size_t count = 1;
    for (auto d : e.shape) count *= d;
    if (count != e.data.size()) throw std::invalid_argument("checkpoint: entry '" + e.name + "' shape/data mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint32_t>(out, d);
    for (double x : e.data) put<double>(out, x);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  std::uint32_t version = 0;
  if (!get(in, version)) truncated("version");
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  std::vector<NamedTensor> entries;
  std::uint32_t name_len = 0;
  while (get(in, name_len)) {
    NamedTensor e;
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) truncated("entry name");
    std::uint32_t rank = 0;
    if (!get(in, rank)) truncated("rank of '" + e.name + "'");
    std::size_t count = 1;
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!get(in, d)) truncated("dims of '" + e.name + "'");
      count *= d;
    }
    e.data.resize(count);
    for (double& x : e.data) {
      if (!get(in, x)) truncated("payload of '" + e.name + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, entries);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

NamedTensor to_named(const std::string& name, const Matrix& m) {
  NamedTensor t;
  t.name = name;
  t.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

Matrix to_matrix(const NamedTensor& t) {
  if (t.shape.size() != 2) throw std::invalid_argument("checkpoint: entry '" + t.name + "' is not rank 2");
  return Eigen::Map<const Matrix>(t.data.data(), t.shape[0], t.shape[1]);
}

std::vector<NamedTensor> collect_entries(const StateRefs& refs) {
  std::vector<NamedTensor> out;
  for (const Parameter* p : refs.params) out.push_back(to_named(p->name, p->value));
  for (const auto& [name, st] : refs.norms) {
    out.push_back(to_named(name + ".running_mean", st->running_mean));
    out.push_back(to_named(name + ".running_var", st->running_var));
  }
  return out;
}

void apply_entries(const StateRefs& refs, const std::vector<NamedTensor>& entries) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto fetch = [&](const std::string& name, const Matrix& like) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    Matrix m = to_matrix(*it->second);
    if (m.rows() != like.rows() || m.cols() != like.cols()) {
      throw std::runtime_error("checkpoint: entry '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + ", model expects " + std::to_string(like.rows()) + "x" +
                               std::to_string(like.cols()));
    }
    return m;
  };
  for (Parameter* p : refs.params) p->value = fetch(p->name, p->value);
  for (const auto& [name, st] : refs.norms) {
    st->running_mean = fetch(name + ".running_mean", st->running_mean);
    st->running_var = fetch(name + ".running_var", st->running_var);
  }
}

}  // namespace planelit::ad
