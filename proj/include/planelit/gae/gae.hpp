#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "planelit/ad/adam.hpp"
#include "planelit/ad/layers.hpp"
#include "planelit/mesh/graph.hpp"

namespace planelit::gae {

struct GaeConfig {
  int vertices = 0;  // N, fixed per domain mesh
  int input_width = 6;
  int hidden1 = 32;
  int hidden2 = 16;
  int latent = 256;
  int output_width = 3;
  double dropout = 0.2;
  double slope = 0.2;  // leaky_relu
  /// Sigmoid on the decoder output instead of a linear head.
  bool sigmoid_output = false;

  void validate() const;
};

nlohmann::json to_json(const GaeConfig& c);
GaeConfig gae_config_from_json(const nlohmann::json& j);

/// One graph convolution: act(S * dropout(H) * W + b). The operator is applied
/// per sample, so H may stack several N-row blocks.
struct GcnLayer {
  ad::Parameter weight;  // in x out
  ad::Parameter bias;    // 1 x out
  bool activate = true;

  GcnLayer() = default;
  GcnLayer(const std::string& name, Eigen::Index in, Eigen::Index out, bool act, Rng& rng);
  void collect(ad::StateRefs& refs) { refs.params.insert(refs.params.end(), {&weight, &bias}); }
};

ad::Var gcn_layer(ad::Tape& tape, const ad::Var& h, const SparseMatrix& s, GcnLayer& layer, double dropout,
                  double slope, Mode mode, Rng* rng);

/// [normals | field] as an N x 6 feature block.
Matrix assemble_features(const Matrix3X& normals, const Matrix& field);

/// Graph autoencoder over one fixed mesh: two GCN layers and an FC layer down
/// to the latent code, mirrored (untied) on the way back up.
class GaeModel {
 public:
  GaeModel(const GaeConfig& config, const mesh::Mesh& domain, Rng& rng);
  GaeModel(const GaeConfig& config, SparseMatrix graph_operator, Rng& rng);

  const GaeConfig& config() const { return config_; }
  const SparseMatrix& graph_operator() const { return op_; }

  /// (B*N) x input_width features -> B x latent. `rng` drives dropout in train mode.
  ad::Var encode(ad::Tape& tape, const ad::Var& features, Mode mode, Rng* rng);
  /// B x latent -> (B*N) x output_width.
  ad::Var decode(ad::Tape& tape, const ad::Var& latent, Mode mode, Rng* rng);

  Matrix encode(const Matrix& features);
  Matrix decode(const Matrix& latent);

  ad::StateRefs state();

 private:
  void build(Rng& rng);

  GaeConfig config_;
  SparseMatrix op_;
  GcnLayer enc1_, enc2_;
  ad::Linear enc_fc_;
  ad::Linear dec_fc_;
  GcnLayer dec1_, dec2_;
};

/// Mean absolute error over all N*D entries.
double reconstruction_loss(const Matrix& p, const Matrix& p_hat);
ad::Var reconstruction_loss(const ad::Var& p, const ad::Var& p_hat);

struct GaeTrainOptions {
  int epochs = 400;
  int batch = 256;
  ad::AdamOptions adam{0.001, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;
  /// Called after every epoch with the mean batch loss.
  std::function<void(int epoch, double loss)> on_epoch;
};

struct GaeTrainResult {
  std::vector<double> loss_trace;
};

/// Minimizes reconstruction_loss(decode(encode(features)), targets) with Adam.
/// Each sample is an N x input_width feature block and an N x output_width target.
/// Throws std::runtime_error naming the epoch on a non-finite loss.
GaeTrainResult train_gae(GaeModel& model, const std::vector<Matrix>& features, const std::vector<Matrix>& targets,
                         const GaeTrainOptions& options);

/// Stacks N-row blocks vertically.
Matrix stack_blocks(const std::vector<Matrix>& blocks, const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t count);

/// Writes `path` (ILNT) and `path` with extension ".json" holding the config.
void save_gae(const std::filesystem::path& path, GaeModel& model, const nlohmann::json& extra = {});
/// Rebuilds a model from its checkpoint; the mesh must match the stored vertex count.
GaeModel load_gae(const std::filesystem::path& path, const mesh::Mesh& domain);
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace planelit::gae
