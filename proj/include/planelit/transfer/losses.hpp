#pragma once

#include "planelit/ad/ops.hpp"

namespace planelit::transfer {

struct LossWeights {
  double pair = 1.0;
  double shading = 0.3;
  double smooth = 2.5;

  void validate() const;
};

struct LsganLosses {
  double discriminator = 0.0;
  double generator = 0.0;
};

/// Least-squares adversarial losses over per-sample scores (B x 1).
///   discriminator: E[(D(y) - 1)^2] + E[D(G(x))^2]
///   generator:     E[(D(G(x)) - 1)^2]
/// With `literal_fake_term` the discriminator's second term is E[(1 - D(G(x)))^2].
LsganLosses lsgan_loss(const Matrix& d_real, const Matrix& d_fake, bool literal_fake_term = false);
ad::Var lsgan_discriminator_loss(const ad::Var& d_real, const ad::Var& d_fake, bool literal_fake_term = false);
ad::Var lsgan_generator_loss(const ad::Var& d_fake);

/// Mean absolute difference between latent codes.
double pair_loss(const Matrix& y, const Matrix& g);
ad::Var pair_loss(const ad::Var& y, const ad::Var& g);

/// (1/N) sum_i (L(v_i) . n(v_i) - c_i)^2 over N x 3 fields and N x 1 targets.
/// Stacked batches give the mean of the per-sample values.
double shading_loss(const Matrix& oi, const Matrix& normals, const Matrix& c);
ad::Var shading_loss(const ad::Var& oi, const Matrix& normals, const Matrix& c);

/// mean |D^{-1} A M - M| over all entries; `neighbor_mean` is D^{-1} A.
double smooth_loss(const Matrix& field, const SparseMatrix& neighbor_mean);
ad::Var smooth_loss(const ad::Var& field, const SparseMatrix& neighbor_mean);

struct LossComponents {
  double lsgan = 0.0;
  double pair = 0.0;
  double shading = 0.0;
  double smooth = 0.0;
};

/// lsgan + w.pair * pair + w.shading * shading + w.smooth * smooth.
/// Throws std::domain_error naming the first non-finite component.
double total_loss(const LossComponents& c, const LossWeights& w = {});
ad::Var total_loss(const ad::Var& lsgan, const ad::Var& pair, const ad::Var& shading, const ad::Var& smooth,
                   const LossWeights& w = {});

}  // namespace planelit::transfer
