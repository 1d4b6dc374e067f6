#pragma once

#include <array>

#include <json.hpp>

#include "planelit/gae/gae.hpp"

namespace planelit::transfer {

/// Five width x width FC layers; the first four are followed by batch norm
/// and leaky_relu, the last is linear.
class Generator {
 public:
  static constexpr int kLayers = 5;

  Generator(int width, Rng& rng, double slope = 0.2);

  int width() const { return width_; }
  ad::Var operator()(ad::Tape& tape, const ad::Var& z, Mode mode);
  /// Eval-mode forward pass, B x width.
  Matrix generate(const Matrix& z);
  ad::StateRefs state();

 private:
  int width_;
  double slope_;
  std::array<ad::Linear, kLayers> fc_;
  std::array<ad::BatchNorm, kLayers - 1> bn_;
};

struct DiscriminatorConfig {
  int vertices = 0;
  int input_width = 6;
  int hidden1 = 32;
  int hidden2 = 16;
  int fc_width = 64;
  double slope = 0.2;
};

nlohmann::json to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

/// Scores (B*N) x 6 per-vertex features [normals | OI] on the object mesh:
/// GCN -> BN -> tanh, twice, then FC -> BN -> leaky_relu -> FC to one score
/// per sample.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, const mesh::Mesh& object, Rng& rng);

  const DiscriminatorConfig& config() const { return config_; }
  ad::Var operator()(ad::Tape& tape, const ad::Var& features, Mode mode);
  /// Eval-mode scores, B x 1.
  Matrix score(const Matrix& features);
  ad::StateRefs state();

 private:
  DiscriminatorConfig config_;
  SparseMatrix op_;
  gae::GcnLayer conv1_, conv2_;
  ad::BatchNorm bn1_, bn2_, bn3_;
  ad::Linear fc1_, fc2_;
};

}  // namespace planelit::transfer
