#pragma once

#include <string>

#include "planelit/ad/tape.hpp"

// Differentiable operations over row-major double matrices. Every function
// records onto the tape that owns its inputs; mixing tapes is an error.
namespace planelit::ad {

/// Throws std::invalid_argument with both shapes when they differ.
void require_same_shape(const char* op, const Matrix& a, const Matrix& b);

Var matmul(const Var& a, const Var& b);

/// input * weight + bias, bias (1 x Dout) broadcast per row.
Var dense_affine(const Var& input, const Var& weight, const Var& bias);
/// a + bias with bias (1 x D) broadcast per row.
Var add_row(const Var& a, const Var& bias);

/// Applies `op` independently to each consecutive block of op.cols() rows of
/// `features`, i.e. a block-diagonal product over a batch of graphs that share
/// one operator. The operator must outlive the tape.
Var sparse_graph_matmul(const SparseMatrix& op, const Var& features);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var leaky_relu(const Var& a, double alpha = 0.2);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);  // subgradient 0 at 0
Var square(const Var& a);

Var sum(const Var& a);   // 1x1
Var mean(const Var& a);  // 1x1

/// Row-major reinterpretation; rows*cols must be preserved.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var hcat(const Var& a, const Var& b);
/// Rows [begin, begin+count).
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
/// Per-row dot product with a constant matrix of the same shape; rows x 1.
Var rowwise_dot(const Var& a, const Matrix& other);
/// rows x 1 -> rows x k by copying the single column.
Var replicate_cols(const Var& a, Eigen::Index k);
/// Copy of the value with no gradient path.
Var detach(const Var& a);

struct BatchNormState {
  Matrix running_mean;  // 1 x D
  Matrix running_var;   // 1 x D
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-column normalization. Train mode uses biased batch statistics and
/// updates the running estimates (unbiased variance); eval mode uses the
/// running estimates.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode);

/// Inverted dropout. Identity in eval mode or at rate 0.
Var dropout(const Var& input, double rate, Mode mode, Rng* rng);

}  // namespace planelit::ad
