#pragma once

#include "planelit/mesh/mesh.hpp"

namespace planelit::lighting {

struct EstimateOptions {
  double smoothing = 0.5;  // lambda
  int iterations = 10;
};

/// Recovers a plane's OI field from observed per-vertex intensities c (N x 1).
/// Starts from the minimum-norm shading-consistent field L(v) = c(v) n(v) and
/// applies `iterations` Jacobi passes of L <- (1 - lambda) L + lambda * mean_nbr(L).
/// Tangential components are unobservable from shading and stay zero on a flat plane.
Matrix3X estimate_plane_oi(const mesh::Mesh& plane, const Matrix& intensities, const EstimateOptions& options = {});

}  // namespace planelit::lighting
