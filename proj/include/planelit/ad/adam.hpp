#pragma once

#include <vector>

#include "planelit/ad/tape.hpp"

namespace planelit::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Updates parameter values in place from their
/// accumulated gradients; it never clears them (call zero_grad()).
class Adam {
 public:
  struct State {
    long step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
  };

  Adam(std::vector<Parameter*> params, AdamOptions options);

  /// Throws std::domain_error naming the parameter if any gradient is not finite.
  void step();
  void zero_grad();

  long step_count() const { return state_.step; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Parameter*>& params() const { return params_; }

  const State& state() const { return state_; }
  void set_state(State s);

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  State state_;
};

}  // namespace planelit::ad
