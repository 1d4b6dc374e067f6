#include "planelit/ad/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace planelit::ad {

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -a, a);
  return w;
}

void StateRefs::append(const StateRefs& other) {
  params.insert(params.end(), other.params.begin(), other.params.end());
  norms.insert(norms.end(), other.norms.begin(), other.norms.end());
}

StateSnapshot snapshot(const StateRefs& refs) {
  StateSnapshot s;
  for (const Parameter* p : refs.params) s.params.push_back(p->value);
  for (const auto& [name, st] : refs.norms) s.norms.push_back(*st);
  return s;
}

void restore(const StateRefs& refs, const StateSnapshot& snap) {
  if (snap.params.size() != refs.params.size() || snap.norms.size() != refs.norms.size()) {
    throw std::invalid_argument("restore: snapshot does not match model layout");
  }
  for (std::size_t i = 0; i < refs.params.size(); ++i) refs.params[i]->value = snap.params[i];
  for (std::size_t i = 0; i < refs.norms.size(); ++i) *refs.norms[i].second = snap.norms[i];
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(name + ".weight", xavier_uniform(in, out, rng)), bias(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::operator()(Tape& tape, const Var& x) { return dense_affine(x, tape.param(weight), tape.param(bias)); }

BatchNorm::BatchNorm(const std::string& n, Eigen::Index width)
    : name(n), gamma(n + ".gamma", Matrix::Ones(1, width)), beta(n + ".beta", Matrix::Zero(1, width)) {
  state.running_mean = Matrix::Zero(1, width);
  state.running_var = Matrix::Ones(1, width);
}

Var BatchNorm::operator()(Tape& tape, const Var& x, Mode mode) {
  return batch_norm(x, tape.param(gamma), tape.param(beta), state, mode);
}

void BatchNorm::collect(StateRefs& refs) {
  refs.params.insert(refs.params.end(), {&gamma, &beta});
  refs.norms.emplace_back(name, &state);
}

}  // namespace planelit::ad
