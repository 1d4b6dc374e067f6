#include "planelit/lighting/estimate.hpp"

#include <stdexcept>

#include "planelit/mesh/graph.hpp"

namespace planelit::lighting {

Matrix3X estimate_plane_oi(const mesh::Mesh& plane, const Matrix& intensities, const EstimateOptions& options) {
  if (intensities.rows() != plane.size() || intensities.cols() != 1) {
    throw std::invalid_argument("estimate_plane_oi: expected " + std::to_string(plane.size()) + "x1 intensities");
  }
  if ((intensities.array() < 0.0).any() || !intensities.allFinite()) {
    throw std::invalid_argument("estimate_plane_oi: intensities must be finite and non-negative");
  }
  if (options.smoothing < 0.0 || options.smoothing > 1.0 || options.iterations < 0) {
    throw std::invalid_argument("estimate_plane_oi: smoothing must lie in [0, 1] and iterations >= 0");
  }
  Matrix3X oi = plane.normals().array().colwise() * intensities.col(0).array();
  if (options.smoothing == 0.0 || options.iterations == 0) return oi;
  const SparseMatrix avg = mesh::neighbor_mean_operator(plane);
  const double lambda = options.smoothing;
  for (int it = 0; it < options.iterations; ++it) {
    Matrix3X next = (1.0 - lambda) * oi + lambda * (avg * oi);
    oi = std::move(next);
  }
  return oi;
}

}  // namespace planelit::lighting
