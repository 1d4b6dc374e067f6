#include "planelit/ad/tape.hpp"

#include <stdexcept>

namespace planelit::ad {

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  if (!p.frozen && (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())) p.zero_grad();
  Node n;
  n.external = &p.value;
  n.param = p.frozen ? nullptr : &p;
  n.requires_grad = !p.frozen;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::vector<int> inputs, BackwardFn backward) {
  if (consumed_) throw std::logic_error("tape: cannot record after backward()");
  Node n;
  n.value = std::move(value);
  for (int in : inputs) {
    if (nodes_.at(static_cast<std::size_t>(in)).requires_grad) n.requires_grad = true;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const { return node_value(nodes_.at(static_cast<std::size_t>(id))); }

const Matrix& Tape::grad(int id) const {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.size() == 0) {
    const Matrix& v = node_value(n);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss was not recorded on this tape");
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + std::to_string(lv.rows()) + "x" +
                                std::to_string(lv.cols()));
  }
  consumed_ = true;
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);

  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

}  // namespace planelit::ad
