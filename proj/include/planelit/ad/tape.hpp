#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "planelit/types.hpp"

namespace planelit::ad {

/// A trainable tensor that outlives any single tape. Gradients accumulate
/// into `grad` across backward passes until the caller zeroes them.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records operations in execution order so that a single reverse sweep can
/// propagate gradients. Nodes are appended only, so inputs always precede
/// their consumers.
class Tape {
 public:
  /// Receives the gradient of the node's output; must accumulate into inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is readable through Var::grad() after backward().
  Var input(Matrix value);
  /// Leaf bound to a parameter. Registering the same parameter twice yields
  /// the same node. Frozen parameters act as constants.
  Var param(Parameter& p);

  Var record(Matrix value, std::vector<int> inputs, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. A tape supports exactly one sweep.
  void backward(const Var& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(int id) const;
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  /// grad(id) += delta, allocating the buffer on first use.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad.noalias() = delta;
    } else {
      n.grad.noalias() += delta;
    }
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;  // parameter storage, not copied
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  const Matrix& node_value(const Node& n) const { return n.external ? *n.external : n.value; }

  mutable std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
  bool consumed_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace planelit::ad
