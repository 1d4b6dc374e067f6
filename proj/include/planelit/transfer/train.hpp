#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "planelit/transfer/losses.hpp"
#include "planelit/transfer/networks.hpp"

namespace planelit::transfer {

/// Training pairs in latent form, precomputed with the frozen GAEs.
struct TransferData {
  Matrix source;       // M x latent: plane-GAE codes of plane OI
  Matrix target;       // M x latent: object-GAE codes of ground-truth object OI
  Matrix real_fields;  // (M*N) x 3: object-GAE reconstructions of the targets
  Matrix shading;      // (M*N) x 1: ground-truth object intensities

  Eigen::Index size() const { return source.rows(); }
};

/// Encodes paired plane and object OI fields (each N x 3 on its own mesh).
/// Object intensities are taken as clamp(L . n) of the ground truth.
TransferData prepare_transfer_data(gae::GaeModel& plane_gae, const Matrix3X& plane_normals,
                                   const std::vector<Matrix>& plane_oi, gae::GaeModel& object_gae,
                                   const Matrix3X& object_normals, const std::vector<Matrix>& object_oi);

struct TransferOptions {
  int epochs = 100;
  int batch = 8;
  int unroll_k = 5;
  ad::AdamOptions generator_adam{0.0001, 0.5, 0.99, 1e-8};
  ad::AdamOptions discriminator_adam{0.0004, 0.5, 0.99, 1e-8};
  LossWeights weights;
  bool literal_fake_term = false;
  std::uint64_t seed = 0;
};

struct StepStats {
  double loss_d = 0.0;
  double loss_g = 0.0;  // total generator objective
  double lsgan_g = 0.0;
  double pair = 0.0;
  double shading = 0.0;
  double smooth = 0.0;
};

struct EpochStats {
  int epoch = 0;
  StepStats mean;
};

/// Alternating LSGAN with unrolled discriminator lookahead. Each step:
/// with k > 0 the discriminator (parameters, batch-norm statistics and Adam
/// state) is saved, advanced k steps on the batch, used for the generator
/// update, then restored; finally the discriminator takes one real step.
/// With k = 0 this is a generator step followed by a discriminator step, both
/// on fakes produced before the generator update.
class TransferTrainer {
 public:
  TransferTrainer(Generator& gen, Discriminator& disc, gae::GaeModel& object_gae, const mesh::Mesh& object,
                  const TransferData& data, const TransferOptions& options);

  /// One training step over the given sample indices (at least two).
  StepStats step(const std::vector<std::size_t>& batch);
  /// Shuffles with the trainer's seeded stream and steps over every full batch.
  EpochStats run_epoch(int epoch);

  long steps_taken() const { return steps_; }

 private:
  double discriminator_step(const Matrix& real_features, const Matrix& fake_features);

  Generator& gen_;
  Discriminator& disc_;
  gae::GaeModel& object_gae_;
  const TransferData& data_;
  TransferOptions options_;
  Matrix3X normals_;
  SparseMatrix neighbor_mean_;
  ad::Adam gen_opt_;
  ad::Adam disc_opt_;
  Rng rng_;
  long steps_ = 0;
};

/// Runs options.epochs epochs, invoking `on_epoch` after each.
std::vector<EpochStats> train_transfer(Generator& gen, Discriminator& disc, gae::GaeModel& object_gae,
                                       const mesh::Mesh& object, const TransferData& data,
                                       const TransferOptions& options,
                                       const std::function<void(const EpochStats&)>& on_epoch = {});

/// CSV with columns epoch, loss_D, loss_G, pair, shading, smooth.
void write_transfer_log(const std::filesystem::path& path, const std::vector<EpochStats>& log);

/// Generator and discriminator in one ILNT file plus a JSON sidecar.
void save_transfer(const std::filesystem::path& path, Generator& gen, Discriminator& disc,
                   const nlohmann::json& extra = {});
/// Restores the generator stored by save_transfer.
Generator load_generator(const std::filesystem::path& path);

/// Plane OI (N_plane x 3) -> predicted object OI (N_obj x 3) through
/// the plane encoder, generator and object decoder, all in eval mode.
Matrix predict_object_oi(gae::GaeModel& plane_gae, const Matrix3X& plane_normals, const Matrix& plane_oi,
                         Generator& gen, gae::GaeModel& object_gae);

}  // namespace planelit::transfer
