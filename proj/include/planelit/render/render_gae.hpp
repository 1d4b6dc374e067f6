#pragma once

#include "planelit/gae/gae.hpp"

namespace planelit::render {

/// GAE configuration of the color renderer: same encoder and decoder as the
/// OI autoencoder but a single sigmoid output channel.
gae::GaeConfig render_gae_config(int vertices);

/// Maps [normals | OI] on an object mesh to per-vertex intensity in [0, 1].
class RenderGae {
 public:
  RenderGae(const gae::GaeConfig& config, const mesh::Mesh& object, Rng& rng);
  /// Takes ownership of a loaded model; throws unless it has one sigmoid output.
  explicit RenderGae(gae::GaeModel model);

  gae::GaeModel& model() { return model_; }
  int vertices() const { return model_.config().vertices; }
  /// Eval-mode prediction, N x 1.
  Matrix intensity(const Matrix3X& normals, const Matrix& oi);

 private:
  gae::GaeModel model_;
};

/// N x 1 intensities replicated to N x 3. Throws when the mesh is not the
/// renderer's domain.
Matrix render_intensity(RenderGae& renderer, const mesh::Mesh& object, const Matrix& oi);

/// Trains on (OI, intensity) pairs over `object`, L1 loss as for the OI autoencoder.
gae::GaeTrainResult train_render_gae(RenderGae& renderer, const mesh::Mesh& object, const std::vector<Matrix>& oi,
                                     const std::vector<Matrix>& intensities, const gae::GaeTrainOptions& options);

void save_render_gae(const std::filesystem::path& path, RenderGae& renderer, const nlohmann::json& extra = {});
RenderGae load_render_gae(const std::filesystem::path& path, const mesh::Mesh& object);

}  // namespace planelit::render
