#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "planelit/dataset/dataset.hpp"
#include "planelit/render/render_gae.hpp"
#include "planelit/transfer/networks.hpp"

namespace planelit::eval {

enum class Scenario { Indoor, Outdoor, SpatiallyVarying, Synthetic };

const char* scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct ErrorPair {
  double mae = 0.0;
  double rmse = 0.0;
};

/// MAE and RMSE over every entry of two equally shaped fields.
ErrorPair relight_error(const Matrix& pred, const Matrix& gt);

struct SceneError {
  std::string scene;
  ErrorPair error;
};

/// Errors pooled over every vertex of every scene, plus the per-scene values.
struct MetricReport {
  std::string name;
  Scenario scenario = Scenario::Synthetic;
  ErrorPair error;
  std::vector<SceneError> scenes;
};

/// Pools predictions against ground truth scene by scene.
MetricReport make_report(const std::string& name, Scenario scenario, const std::vector<Matrix>& preds,
                         const std::vector<Matrix>& gts, const std::vector<std::string>& scene_names);

/// Predicts the per-vertex mean OI of its training set for every input.
class MeanFieldBaseline {
 public:
  explicit MeanFieldBaseline(Matrix mean_oi) : mean_oi_(std::move(mean_oi)) {}
  const Matrix& predict() const { return mean_oi_; }

 private:
  Matrix mean_oi_;
};

/// Throws on an empty set or mismatched shapes.
MeanFieldBaseline mean_field_baseline(const std::vector<Matrix>& training_oi);

/// The trained chain plane OI -> object OI -> intensity. Without a renderer
/// intensities come from clamp(L . n) of the predicted OI.
struct Pipeline {
  gae::GaeModel* plane_gae = nullptr;
  transfer::Generator* generator = nullptr;
  gae::GaeModel* object_gae = nullptr;
  render::RenderGae* renderer = nullptr;
};

/// Object intensities (N x 1) predicted from one sample's estimated plane OI.
Matrix predict_intensity(Pipeline& p, const dataset::SceneMeshes& scene, const dataset::Sample& s);

MetricReport evaluate_pipeline(Pipeline& p, const dataset::SceneMeshes& scene,
                               const std::vector<dataset::Sample>& samples, const std::string& name,
                               Scenario scenario);
MetricReport evaluate_baseline(const MeanFieldBaseline& b, const dataset::SceneMeshes& scene,
                               const std::vector<dataset::Sample>& samples, Scenario scenario);

struct AblationConfig {
  std::string name;
  std::filesystem::path checkpoint;  // transfer checkpoint holding the generator
};

/// One report per configuration, each evaluated with its own generator and the
/// shared GAEs and renderer in `shared`. Throws naming the first missing checkpoint.
std::vector<MetricReport> run_ablation(const std::vector<AblationConfig>& configs, Pipeline shared,
                                       const dataset::SceneMeshes& scene,
                                       const std::vector<dataset::Sample>& samples, Scenario scenario);

/// Columns: name, scenario, mae, rmse, scenes.
std::string reports_csv(const std::vector<MetricReport>& reports);
std::string reports_markdown(const std::vector<MetricReport>& reports);
/// Columns: name, scene, mae, rmse.
std::string scenes_csv(const std::vector<MetricReport>& reports);
void write_reports(const std::filesystem::path& dir, const std::string& stem,
                   const std::vector<MetricReport>& reports);

}  // namespace planelit::eval
