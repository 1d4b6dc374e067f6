#include "planelit/mesh/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace planelit::mesh {

SparseMatrix sparse_from_triplets(Eigen::Index n, const std::vector<Eigen::Triplet<double>>& triplets) {
  for (const auto& t : triplets) {
    if (t.row() < 0 || t.row() >= n || t.col() < 0 || t.col() >= n) {
      throw std::out_of_range("sparse_from_triplets: index (" + std::to_string(t.row()) + "," +
                              std::to_string(t.col()) + ") outside " + std::to_string(n) + "x" + std::to_string(n));
    }
  }
  SparseMatrix s(n, n);
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  return s;
}

GraphOperator build_graph_operator(const std::vector<std::vector<int>>& neighbors) {
  const auto n = static_cast<Eigen::Index>(neighbors.size());
  GraphOperator g;
  g.degree.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) g.degree(i) = 1.0 + static_cast<double>(neighbors[static_cast<std::size_t>(i)].size());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i) {
    trips.emplace_back(i, i, 1.0 / g.degree(i));
    for (int j : neighbors[static_cast<std::size_t>(i)]) {
      // Both (i,j) and (j,i) evaluate the same expression, so S is exactly symmetric.
      trips.emplace_back(i, j, 1.0 / std::sqrt(g.degree(i) * g.degree(j)));
    }
  }
  g.matrix = sparse_from_triplets(n, trips);
  return g;
}

GraphOperator build_graph_operator(const Mesh& m) { return build_graph_operator(m.neighbors()); }

SparseMatrix neighbor_mean_operator(const std::vector<std::vector<int>>& neighbors) {
  const auto n = static_cast<Eigen::Index>(neighbors.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw std::invalid_argument("neighbor_mean_operator: vertex " + std::to_string(i) + " has no neighbors");
    const double w = 1.0 / static_cast<double>(nb.size());
    for (int j : nb) trips.emplace_back(i, j, w);
  }
  return sparse_from_triplets(n, trips);
}

}  // namespace planelit::mesh
