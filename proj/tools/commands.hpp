#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace planelit::cli {

/// Bad flags or inputs; exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An acceptance threshold was violated; exit code 3.
struct ThresholdFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum ExitCode { kSuccess = 0, kUsage = 1, kRuntime = 2, kThreshold = 3 };

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  int jobs = 1;
};

struct GenDataOptions {
  Common common;
  bool synthetic = false;
  bool real = false;
  int count = 500;
  std::string object = "icosphere2";
  std::string plane = "plane32";
  double plane_extent = 4.0;
  int lights = 32;
  int rotations = 3;
  std::vector<std::string> hdr;
  std::vector<double> fractions{0.82, 0.09, 0.09};
};

struct TrainOptions {
  Common common;
  std::string stage;
  std::string data;
  int epochs = 0;  // 0 picks the stage default
  int batch = 0;
  double lr = 0.001;
  int latent = 256;
  double dropout = 0.2;
  int unroll_k = 5;
  double lr_g = 0.0001;
  double lr_d = 0.0004;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double beta_pair = 1.0;
  double beta_shading = 0.3;
  double beta_smooth = 2.5;
  bool literal_fake_term = false;
  double dark_fraction = 1.0 / 64.0;
  std::string name = "transfer";
};

struct RelightOptions {
  Common common;
  std::string checkpoints = "checkpoints";
  std::string transfer = "transfer";
  std::string scene;
  std::string image;
  std::string lighting;
  std::vector<std::string> intensities;
  std::vector<std::string> positions;
  double scale = 1.0;
  int width = 640;
  int height = 480;
};

struct EvalOptions {
  Common common;
  std::string data;
  std::string checkpoints = "checkpoints";
  std::string transfer = "transfer";
  std::string split = "test";
  std::string baseline;
  std::string scenario;
  std::vector<std::string> ablation;
  bool analytic_shading = false;
  double max_mae = 0.0;          // 0 disables
  double min_improvement = 0.0;  // fraction of the baseline MAE; 0 disables
};

struct MedianCutOptions {
  Common common;
  std::string hdr;
  int n = 32;
  double radius = 4.0;
};

int cmd_gen_data(const GenDataOptions& o);
int cmd_train(const TrainOptions& o);
int cmd_relight(const RelightOptions& o);
int cmd_eval(const EvalOptions& o);
int cmd_median_cut(const MedianCutOptions& o);

/// Checkpoint file of a training stage inside a checkpoint directory.
std::string stage_checkpoint(const std::string& stage);

}  // namespace planelit::cli
