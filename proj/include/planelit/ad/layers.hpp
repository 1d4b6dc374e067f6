#pragma once

#include <string>
#include <utility>
#include <vector>

#include "planelit/ad/ops.hpp"

namespace planelit::ad {

/// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

/// Non-owning view of everything a model persists: trainable parameters and
/// batch-norm running statistics.
struct StateRefs {
  std::vector<Parameter*> params;
  std::vector<std::pair<std::string, BatchNormState*>> norms;

  void append(const StateRefs& other);
};

/// Value copy of a StateRefs, for save/restore around speculative updates.
struct StateSnapshot {
  std::vector<Matrix> params;
  std::vector<BatchNormState> norms;
};

StateSnapshot snapshot(const StateRefs& refs);
void restore(const StateRefs& refs, const StateSnapshot& snap);

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
  Var operator()(Tape& tape, const Var& x);
  void collect(StateRefs& refs) { refs.params.insert(refs.params.end(), {&weight, &bias}); }
};

struct BatchNorm {
  std::string name;
  Parameter gamma;
  Parameter beta;
  BatchNormState state;

  BatchNorm() = default;
  BatchNorm(const std::string& n, Eigen::Index width);
  Var operator()(Tape& tape, const Var& x, Mode mode);
  void collect(StateRefs& refs);
};

}  // namespace planelit::ad
