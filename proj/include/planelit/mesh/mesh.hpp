#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "planelit/types.hpp"

namespace planelit::mesh {

/// Height of the supporting plane in the canonical object frame: objects are
/// modeled around the origin and rest on z = kSupportHeight.
inline constexpr double kSupportHeight = -1.0;

using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle mesh viewed as an undirected graph over its vertices. Adjacency is
/// the set of triangle edges (no self-loops); normals are unit length.
/// Immutable after construction.
class Mesh {
 public:
  Mesh() = default;
  /// Normals are computed (area-weighted); every vertex must belong to a face.
  Mesh(Matrix3X vertices, Faces faces);
  /// Uses the supplied normals after normalizing them.
  Mesh(Matrix3X vertices, Faces faces, Matrix3X normals);

  Eigen::Index size() const { return vertices_.rows(); }
  const Matrix3X& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  const Matrix3X& normals() const { return normals_; }
  /// Sorted neighbor lists.
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  std::size_t edge_count() const { return edge_count_; }

  Vec3 centroid() const;
  /// Largest vertex distance from the centroid.
  double bounding_radius() const;

 private:
  void build_adjacency();

  Matrix3X vertices_;
  Faces faces_;
  Matrix3X normals_;
  std::vector<std::vector<int>> neighbors_;
  std::size_t edge_count_ = 0;
};

/// Area-weighted mean of incident face normals, normalized. Throws for a
/// vertex that belongs to no face or whose incident faces are degenerate.
Matrix3X vertex_normals(const Matrix3X& vertices, const Faces& faces);

/// Throws unless `r` is orthonormal within `tol` with determinant +1.
void require_rotation(const Mat3& r, double tol = 1e-9);

/// Rotates positions and normals about the origin; connectivity unchanged.
Mesh rotate_mesh(const Mesh& m, const Mat3& rotation);
Mesh translate_mesh(const Mesh& m, const Vec3& offset);

/// rows x cols grid in the z=0 plane spanning [-extent/2, extent/2]^2,
/// row-major vertex order, normals +z.
Mesh make_plane_mesh(int rows, int cols, double extent);
/// Subdivided icosahedron with 10*4^k + 2 vertices.
Mesh make_icosphere(int subdivisions, double radius = 1.0);
/// Axis-aligned cube, 8 vertices and 12 triangles.
Mesh make_cube(double half_extent = 1.0);
/// Cylinder of the given half-length capped by hemispheres, axis along z.
Mesh make_capsule(int rings, int segments, double radius = 0.5, double half_length = 0.5);

/// Resolves names such as "icosphere2", "cube", "capsule", "plane16" (16x16)
/// or "plane16x8"; anything else is treated as a mesh file path.
Mesh mesh_from_spec(const std::string& spec, double plane_extent = 4.0);

/// OBJ (v, vn, f with a, a/b, a//n, a/b/n corners) or ASCII PLY by extension.
/// Polygons are fan-triangulated. Errors carry the offending line number.
Mesh load_mesh(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const Mesh& m);
void write_ply(const std::filesystem::path& path, const Mesh& m);

}  // namespace planelit::mesh
