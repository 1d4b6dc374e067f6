#include "planelit/mesh/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace planelit::mesh {
namespace {

void check_faces(const Faces& faces, Eigen::Index n) {
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (faces(f, k) < 0 || faces(f, k) >= n) {
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " references vertex " +
                                    std::to_string(faces(f, k)) + " outside [0," + std::to_string(n) + ")");
      }
    }
  }
}

Matrix3X normalized_rows(Matrix3X n) {
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    const double len = n.row(i).norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw std::invalid_argument("mesh: zero or non-finite normal at vertex " + std::to_string(i));
    }
    n.row(i) /= len;
  }
  return n;
}

}  // namespace

Mesh::Mesh(Matrix3X vertices, Faces faces) : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  check_faces(faces_, vertices_.rows());
  normals_ = vertex_normals(vertices_, faces_);
  build_adjacency();
}

Mesh::Mesh(Matrix3X vertices, Faces faces, Matrix3X normals)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  check_faces(faces_, vertices_.rows());
  if (normals.rows() != vertices_.rows()) throw std::invalid_argument("mesh: normal count differs from vertex count");
  normals_ = normalized_rows(std::move(normals));
  build_adjacency();
}

void Mesh::build_adjacency() {
  neighbors_.assign(static_cast<std::size_t>(vertices_.rows()), {});
  for (Eigen::Index f = 0; f < faces_.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = faces_(f, k), b = faces_(f, (k + 1) % 3);
      if (a == b) continue;
      neighbors_[static_cast<std::size_t>(a)].push_back(b);
      neighbors_[static_cast<std::size_t>(b)].push_back(a);
    }
  }
  edge_count_ = 0;
  for (auto& nb : neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    edge_count_ += nb.size();
  }
  edge_count_ /= 2;
}

Vec3 Mesh::centroid() const { return vertices_.colwise().mean().transpose(); }

double Mesh::bounding_radius() const {
  if (vertices_.rows() == 0) return 0.0;
  const Vec3 c = centroid();
  return (vertices_.rowwise() - c.transpose()).rowwise().norm().maxCoeff();
}

Matrix3X vertex_normals(const Matrix3X& vertices, const Faces& faces) {
  check_faces(faces, vertices.rows());
  Matrix3X acc = Matrix3X::Zero(vertices.rows(), 3);
  std::vector<int> incident(static_cast<std::size_t>(vertices.rows()), 0);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Vec3 a = vertices.row(faces(f, 0)), b = vertices.row(faces(f, 1)), c = vertices.row(faces(f, 2));
    // Cross product magnitude is twice the area: area weighting comes for free.
    const Vec3 n = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) {
      acc.row(faces(f, k)) += n.transpose();
      ++incident[static_cast<std::size_t>(faces(f, k))];
    }
  }
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    if (incident[static_cast<std::size_t>(i)] == 0) {
      throw std::invalid_argument("vertex_normals: vertex " + std::to_string(i) + " belongs to no face");
    }
  }
  return normalized_rows(std::move(acc));
}

void require_rotation(const Mat3& r, double tol) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= tol)) throw std::invalid_argument("rotation: matrix is not orthonormal (error " + std::to_string(ortho) + ")");
  if (!(std::abs(r.determinant() - 1.0) <= tol)) throw std::invalid_argument("rotation: determinant is not +1");
}

Mesh rotate_mesh(const Mesh& m, const Mat3& rotation) {
  require_rotation(rotation);
  Matrix3X v = m.vertices() * rotation.transpose();
  Matrix3X n = m.normals() * rotation.transpose();
  return Mesh(std::move(v), m.faces(), std::move(n));
}

Mesh translate_mesh(const Mesh& m, const Vec3& offset) {
  Matrix3X v = m.vertices().rowwise() + offset.transpose();
  return Mesh(std::move(v), m.faces(), m.normals());
}

Mesh make_plane_mesh(int rows, int cols, double extent) {
  if (rows < 2 || cols < 2) throw std::invalid_argument("make_plane_mesh: rows and cols must be >= 2");
  if (!(extent > 0.0)) throw std::invalid_argument("make_plane_mesh: extent must be positive");
  Matrix3X v(rows * cols, 3);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = extent * (static_cast<double>(c) / (cols - 1) - 0.5);
      const double y = extent * (static_cast<double>(r) / (rows - 1) - 0.5);
      v.row(r * cols + c) << x, y, 0.0;
    }
  }
  Faces f(2 * (rows - 1) * (cols - 1), 3);
  Eigen::Index k = 0;
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int i00 = r * cols + c, i01 = i00 + 1, i10 = i00 + cols, i11 = i10 + 1;
      f.row(k++) << i00, i01, i11;
      f.row(k++) << i00, i11, i10;
    }
  }
  Matrix3X n(rows * cols, 3);
  n.rowwise() = Eigen::RowVector3d(0.0, 0.0, 1.0);
  return Mesh(std::move(v), std::move(f), std::move(n));
}

Mesh make_icosphere(int subdivisions, double radius) {
  if (subdivisions < 0) throw std::invalid_argument("make_icosphere: negative subdivision level");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> pts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : pts) p.normalize();
  std::vector<std::array<int, 3>> tris = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      pts.push_back((pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(pts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& tri : tris) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    tris = std::move(next);
  }
  Matrix3X v(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = radius * pts[i].transpose();
  Faces f(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) f.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return Mesh(std::move(v), std::move(f));
}

Mesh make_cube(double half_extent) {
  Matrix3X v(8, 3);
  for (int i = 0; i < 8; ++i) {
    v.row(i) << ((i & 1) ? 1 : -1), ((i & 2) ? 1 : -1), ((i & 4) ? 1 : -1);
  }
  v *= half_extent;
  Faces f(12, 3);
  f << 0, 2, 3, 0, 3, 1,  // -z
      4, 5, 7, 4, 7, 6,   // +z
      0, 1, 5, 0, 5, 4,   // -y
      2, 6, 7, 2, 7, 3,   // +y
      0, 4, 6, 0, 6, 2,   // -x
      1, 3, 7, 1, 7, 5;   // +x
  return Mesh(std::move(v), std::move(f));
}

Mesh make_capsule(int rings, int segments, double radius, double half_length) {
  if (rings < 1 || segments < 3) throw std::invalid_argument("make_capsule: need rings >= 1 and segments >= 3");
  std::vector<Vec3> pts;
  pts.emplace_back(0.0, 0.0, half_length + radius);
  // Hemisphere rings (top then bottom); the two equator rings form the cylinder.
  for (int hemi = 0; hemi < 2; ++hemi) {
    for (int r = 1; r <= rings; ++r) {
      const double phi = (std::numbers::pi / 2.0) * r / rings;
      const double ring_phi = hemi == 0 ? phi : std::numbers::pi / 2.0 + (std::numbers::pi / 2.0) * (r - 1) / rings;
      const double z0 = hemi == 0 ? half_length : -half_length;
      for (int s = 0; s < segments; ++s) {
        const double th = 2.0 * std::numbers::pi * s / segments;
        pts.emplace_back(radius * std::sin(ring_phi) * std::cos(th), radius * std::sin(ring_phi) * std::sin(th),
                         z0 + radius * std::cos(ring_phi));
      }
    }
  }
  pts.emplace_back(0.0, 0.0, -half_length - radius);
  const int ring_count = 2 * rings;
  const int bottom = static_cast<int>(pts.size()) - 1;
  auto at = [&](int ring, int s) { return 1 + ring * segments + (s % segments); };
  std::vector<std::array<int, 3>> tris;
  for (int s = 0; s < segments; ++s) tris.push_back({0, at(0, s), at(0, s + 1)});
  for (int r = 0; r + 1 < ring_count; ++r) {
    for (int s = 0; s < segments; ++s) {
      tris.push_back({at(r, s), at(r + 1, s), at(r + 1, s + 1)});
      tris.push_back({at(r, s), at(r + 1, s + 1), at(r, s + 1)});
    }
  }
  for (int s = 0; s < segments; ++s) tris.push_back({bottom, at(ring_count - 1, s + 1), at(ring_count - 1, s)});
  Matrix3X v(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  Faces f(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) f.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return Mesh(std::move(v), std::move(f));
}

Mesh mesh_from_spec(const std::string& spec, double plane_extent) {
  auto digits = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (spec.rfind("icosphere", 0) == 0 && digits(spec.substr(9))) return make_icosphere(std::stoi(spec.substr(9)));
  if (spec == "cube") return make_cube(0.5);
  if (spec == "capsule") return make_capsule(4, 12);
  if (spec.rfind("plane", 0) == 0) {
    const std::string rest = spec.substr(5);
    const auto x = rest.find('x');
    if (x == std::string::npos && digits(rest)) return make_plane_mesh(std::stoi(rest), std::stoi(rest), plane_extent);
    if (x != std::string::npos && digits(rest.substr(0, x)) && digits(rest.substr(x + 1))) {
      return make_plane_mesh(std::stoi(rest.substr(0, x)), std::stoi(rest.substr(x + 1)), plane_extent);
    }
  }
  return load_mesh(spec);
}

namespace {

[[noreturn]] void parse_error(const std::filesystem::path& path, int line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

Mesh assemble(const std::filesystem::path& path, std::vector<Vec3>& v, std::vector<std::array<int, 3>>& tris,
              std::vector<Vec3>* normals) {
  if (v.empty()) throw std::runtime_error(path.string() + ": no vertices");
  Matrix3X vm(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) vm.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  Faces f(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) f.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  if (normals != nullptr) {
    Matrix3X nm(vm.rows(), 3);
    for (std::size_t i = 0; i < normals->size(); ++i) nm.row(static_cast<Eigen::Index>(i)) = (*normals)[i].transpose();
    return Mesh(std::move(vm), std::move(f), std::move(nm));
  }
  return Mesh(std::move(vm), std::move(f));
}

Mesh load_obj(const std::filesystem::path& path, std::istream& in) {
  std::vector<Vec3> v, vn;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> corner_normal;  // per vertex, -1 if unassigned
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v" || tag == "vn") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) parse_error(path, lineno, "expected three coordinates after '" + tag + "'");
      (tag == "v" ? v : vn).push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx, nidx;
      std::string corner;
      while (ls >> corner) {
        const auto s1 = corner.find('/');
        int vi = 0, ni = 0;
        try {
          vi = std::stoi(corner.substr(0, s1));
          if (s1 != std::string::npos) {
            const auto s2 = corner.find('/', s1 + 1);
            if (s2 != std::string::npos && s2 + 1 < corner.size()) ni = std::stoi(corner.substr(s2 + 1));
          }
        } catch (const std::exception&) {
          parse_error(path, lineno, "malformed face corner '" + corner + "'");
        }
        if (vi < 0) vi = static_cast<int>(v.size()) + vi + 1;
        if (ni < 0) ni = static_cast<int>(vn.size()) + ni + 1;
        if (vi < 1 || vi > static_cast<int>(v.size())) parse_error(path, lineno, "vertex index out of range");
        if (ni > static_cast<int>(vn.size())) parse_error(path, lineno, "normal index out of range");
        idx.push_back(vi - 1);
        nidx.push_back(ni - 1);
      }
      if (idx.size() < 3) parse_error(path, lineno, "face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.push_back({idx[0], idx[k], idx[k + 1]});
      corner_normal.resize(v.size(), -1);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (nidx[k] >= 0) corner_normal[static_cast<std::size_t>(idx[k])] = nidx[k];
      }
    }
    // Other statements (vt, o, g, s, usemtl, mtllib) carry nothing we need.
  }
  corner_normal.resize(v.size(), -1);
  const bool have_normals =
      !vn.empty() && std::all_of(corner_normal.begin(), corner_normal.end(), [](int n) { return n >= 0; });
  if (have_normals) {
    std::vector<Vec3> normals(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) normals[i] = vn[static_cast<std::size_t>(corner_normal[i])];
    return assemble(path, v, tris, &normals);
  }
  return assemble(path, v, tris, nullptr);
}

Mesh load_ply(const std::filesystem::path& path, std::istream& in) {
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") parse_error(path, 1, "missing 'ply' magic");
  long nverts = -1, nfaces = 0;
  std::vector<std::string> vprops;
  std::string current;
  while (true) {
    if (!next_line()) parse_error(path, lineno, "unterminated header");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") parse_error(path, lineno, "only ASCII PLY is supported");
    } else if (tag == "element") {
      long count = 0;
      ls >> current >> count;
      if (current == "vertex") nverts = count;
      else if (current == "face") nfaces = count;
    } else if (tag == "property") {
      if (current == "vertex") {
        std::string type, name;
        ls >> type >> name;
        vprops.push_back(name);
      }
    } else if (tag == "end_header") {
      break;
    }
  }
  if (nverts < 0) parse_error(path, lineno, "no vertex element");
  auto col = [&](const char* name) {
    auto it = std::find(vprops.begin(), vprops.end(), name);
    return it == vprops.end() ? -1 : static_cast<int>(it - vprops.begin());
  };
  const int ix = col("x"), iy = col("y"), iz = col("z"), inx = col("nx"), iny = col("ny"), inz = col("nz");
  if (ix < 0 || iy < 0 || iz < 0) parse_error(path, lineno, "vertex element lacks x, y, z");
  const bool have_normals = inx >= 0 && iny >= 0 && inz >= 0;
  std::vector<Vec3> v, n;
  std::vector<double> vals(vprops.size());
  for (long i = 0; i < nverts; ++i) {
    if (!next_line()) parse_error(path, lineno, "unexpected end of vertex list");
    std::istringstream ls(line);
    for (double& x : vals) {
      if (!(ls >> x)) parse_error(path, lineno, "malformed vertex line");
    }
    v.emplace_back(vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)], vals[static_cast<std::size_t>(iz)]);
    if (have_normals) {
      n.emplace_back(vals[static_cast<std::size_t>(inx)], vals[static_cast<std::size_t>(iny)], vals[static_cast<std::size_t>(inz)]);
    }
  }
  std::vector<std::array<int, 3>> tris;
  for (long i = 0; i < nfaces; ++i) {
    if (!next_line()) parse_error(path, lineno, "unexpected end of face list");
    std::istringstream ls(line);
    int k = 0;
    if (!(ls >> k) || k < 3) parse_error(path, lineno, "malformed face line");
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int& x : idx) {
      if (!(ls >> x) || x < 0 || x >= nverts) parse_error(path, lineno, "face index out of range");
    }
    for (std::size_t j = 1; j + 1 < idx.size(); ++j) tris.push_back({idx[0], idx[j], idx[j + 1]});
  }
  return assemble(path, v, tris, have_normals ? &n : nullptr);
}

}  // namespace

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mesh: cannot open " + path.string());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".ply") return load_ply(path, in);
  if (ext == ".obj") return load_obj(path, in);
  throw std::runtime_error("load_mesh: unsupported extension '" + ext + "'");
}

void write_obj(const std::filesystem::path& path, const Mesh& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_obj: cannot open " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << "v " << m.vertices()(i, 0) << ' ' << m.vertices()(i, 1) << ' ' << m.vertices()(i, 2) << '\n';
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << "vn " << m.normals()(i, 0) << ' ' << m.normals()(i, 1) << ' ' << m.normals()(i, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < m.faces().rows(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << m.faces()(f, k) + 1 << "//" << m.faces()(f, k) + 1;
    out << '\n';
  }
}

void write_ply(const std::filesystem::path& path, const Mesh& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ply: cannot open " + path.string());
  out.precision(17);
  out << "ply\nformat ascii 1.0\nelement vertex " << m.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n"
         "property double nx\nproperty double ny\nproperty double nz\nelement face "
      << m.faces().rows() << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << m.vertices()(i, 0) << ' ' << m.vertices()(i, 1) << ' ' << m.vertices()(i, 2) << ' ' << m.normals()(i, 0)
        << ' ' << m.normals()(i, 1) << ' ' << m.normals()(i, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < m.faces().rows(); ++f) {
    out << "3 " << m.faces()(f, 0) << ' ' << m.faces()(f, 1) << ' ' << m.faces()(f, 2) << '\n';
  }
}

}  // namespace planelit::mesh
