#include "planelit/ad/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace planelit::ad {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (Parameter* p : params_) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
    state_.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    state_.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.allFinite()) throw std::domain_error("adam: non-finite gradient in parameter '" + p->name + "'");
  }
  ++state_.step;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    // Blocked so the three passes over each slice stay in cache.
    constexpr Eigen::Index kBlock = 2048;
    for (Eigen::Index start = 0; start < p.value.size(); start += kBlock) {
      const Eigen::Index len = std::min(kBlock, p.value.size() - start);
      auto g = Eigen::Map<const Eigen::ArrayXd>(p.grad.data() + start, len);
      auto m = Eigen::Map<Eigen::ArrayXd>(state_.m[i].data() + start, len);
      auto v = Eigen::Map<Eigen::ArrayXd>(state_.v[i].data() + start, len);
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.square();
      Eigen::Map<Eigen::ArrayXd>(p.value.data() + start, len) -= options_.lr * (m / c1) / ((v / c2).sqrt() + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::set_state(State s) {
  if (s.m.size() != params_.size() || s.v.size() != params_.size()) {
    throw std::invalid_argument("adam: state does not match parameter list");
  }
  state_ = std::move(s);
}

}  // namespace planelit::ad
