#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace planelit {

// Row-major storage everywhere: a (B*N) x D batch of per-vertex features and a
// B x (N*D) batch of flattened vertex-major rows share one memory layout.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename Scalar>
using SparseMatrixX = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

using Matrix = MatrixX<double>;
using Matrix3X = MatrixX3<double>;  // N x 3, one row per vertex
using SparseMatrix = SparseMatrixX<double>;
using Vector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-item seeds from a
// master seed so parallel work stays reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits. std::uniform_real_distribution
// is implementation-defined, this is not.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

enum class Mode { Train, Eval };

}  // namespace planelit
