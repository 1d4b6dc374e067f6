#pragma once

#include <vector>

#include "planelit/mesh/mesh.hpp"

namespace planelit::mesh {

/// Renormalized propagation operator S = D~^{-1/2} (A + I) D~^{-1/2} with
/// D~ the degree matrix of A + I. Symmetric, spectrum within [-1, 1].
struct GraphOperator {
  SparseMatrix matrix;
  Vector degree;  // diagonal of D~

  Eigen::Index size() const { return matrix.rows(); }
};

/// Builds an n x n sparse matrix, rejecting out-of-range indices.
SparseMatrix sparse_from_triplets(Eigen::Index n, const std::vector<Eigen::Triplet<double>>& triplets);

GraphOperator build_graph_operator(const Mesh& m);
GraphOperator build_graph_operator(const std::vector<std::vector<int>>& neighbors);

/// D^{-1} A without self-loops; row i averages the neighbors of vertex i.
/// Throws if any vertex has no neighbors.
SparseMatrix neighbor_mean_operator(const std::vector<std::vector<int>>& neighbors);
inline SparseMatrix neighbor_mean_operator(const Mesh& m) { return neighbor_mean_operator(m.neighbors()); }

}  // namespace planelit::mesh
