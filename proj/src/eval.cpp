#include "planelit/eval/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "planelit/lighting/environment.hpp"
#include "planelit/transfer/train.hpp"

namespace planelit::eval {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string scene_label(const dataset::Sample& s, std::size_t i) {
  return "env" + std::to_string(i) + "_" + std::to_string(s.environment.seed);
}

}  // namespace

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Indoor:
      return "indoor";
    case Scenario::Outdoor:
      return "outdoor";
    case Scenario::SpatiallyVarying:
      return "spatially-varying";
    case Scenario::Synthetic:
      return "synthetic";
  }
  return "synthetic";
}

Scenario scenario_from_name(const std::string& name) {
  for (Scenario s : {Scenario::Indoor, Scenario::Outdoor, Scenario::SpatiallyVarying, Scenario::Synthetic}) {
    if (name == scenario_name(s)) return s;
  }
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

ErrorPair relight_error(const Matrix& pred, const Matrix& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("relight_error: shape mismatch " + std::to_string(pred.rows()) + "x" +
                                std::to_string(pred.cols()) + " vs " + std::to_string(gt.rows()) + "x" +
                                std::to_string(gt.cols()));
  }
  if (pred.size() == 0) throw std::invalid_argument("relight_error: empty fields");
  const Matrix d = pred - gt;
  const auto n = static_cast<double>(d.size());
  return {d.cwiseAbs().sum() / n, std::sqrt(d.squaredNorm() / n)};
}

MetricReport make_report(const std::string& name, Scenario scenario, const std::vector<Matrix>& preds,
                         const std::vector<Matrix>& gts, const std::vector<std::string>& scene_names) {
  if (preds.size() != gts.size() || preds.size() != scene_names.size()) {
    throw std::invalid_argument("make_report: predictions, ground truth and scene names differ in count");
  }
  if (preds.empty()) throw std::invalid_argument("make_report: no scenes");
  MetricReport r{name, scenario, {}, {}};
  double abs_sum = 0.0, sq_sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const ErrorPair e = relight_error(preds[i], gts[i]);
    r.scenes.push_back({scene_names[i], e});
    const auto n = static_cast<double>(preds[i].size());
    abs_sum += e.mae * n;
    sq_sum += e.rmse * e.rmse * n;
    count += n;
  }
  r.error = {abs_sum / count, std::sqrt(sq_sum / count)};
  return r;
}

MeanFieldBaseline mean_field_baseline(const std::vector<Matrix>& training_oi) {
  if (training_oi.empty()) throw std::invalid_argument("mean_field_baseline: empty training set");
  Matrix sum = Matrix::Zero(training_oi[0].rows(), training_oi[0].cols());
  for (const Matrix& m : training_oi) {
    if (m.rows() != sum.rows() || m.cols() != sum.cols()) {
      throw std::invalid_argument("mean_field_baseline: training fields differ in shape");
    }
    sum += m;
  }
  return MeanFieldBaseline(sum / static_cast<double>(training_oi.size()));
}

Matrix predict_intensity(Pipeline& p, const dataset::SceneMeshes& scene, const dataset::Sample& s) {
  if (!p.plane_gae || !p.generator || !p.object_gae) throw std::invalid_argument("predict_intensity: incomplete pipeline");
  const Matrix oi = transfer::predict_object_oi(*p.plane_gae, scene.plane.normals(), s.plane_oi_estimated,
                                                *p.generator, *p.object_gae);
  if (p.renderer) return p.renderer->intensity(scene.object.normals(), oi);
  return lighting::reflected_radiance(oi, scene.object.normals());
}

MetricReport evaluate_pipeline(Pipeline& p, const dataset::SceneMeshes& scene,
                               const std::vector<dataset::Sample>& samples, const std::string& name,
                               Scenario scenario) {
  std::vector<Matrix> preds, gts;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds.push_back(predict_intensity(p, scene, samples[i]));
    gts.push_back(samples[i].object_intensity);
    names.push_back(scene_label(samples[i], i));
  }
  return make_report(name, scenario, preds, gts, names);
}

MetricReport evaluate_baseline(const MeanFieldBaseline& b, const dataset::SceneMeshes& scene,
                               const std::vector<dataset::Sample>& samples, Scenario scenario) {
  const Matrix pred = lighting::reflected_radiance(b.predict(), scene.object.normals());
  std::vector<Matrix> preds, gts;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds.push_back(pred);
    gts.push_back(samples[i].object_intensity);
    names.push_back(scene_label(samples[i], i));
  }
  return make_report("mean-field", scenario, preds, gts, names);
}

std::vector<MetricReport> run_ablation(const std::vector<AblationConfig>& configs, Pipeline shared,
                                       const dataset::SceneMeshes& scene,
                                       const std::vector<dataset::Sample>& samples, Scenario scenario) {
  for (const auto& c : configs) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(c.checkpoint, ec)) {
      throw std::runtime_error("ablation config '" + c.name + "': missing checkpoint " + c.checkpoint.string());
    }
  }
  std::vector<MetricReport> out;
  for (const auto& c : configs) {
    transfer::Generator gen = transfer::load_generator(c.checkpoint);
    Pipeline p = shared;
    p.generator = &gen;
    out.push_back(evaluate_pipeline(p, scene, samples, c.name, scenario));
  }
  return out;
}

std::string reports_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream s;
  s << "name,scenario,mae,rmse,scenes\n";
  for (const auto& r : reports) {
    s << r.name << ',' << scenario_name(r.scenario) << ',' << fixed(r.error.mae) << ',' << fixed(r.error.rmse) << ','
      << r.scenes.size() << '\n';
  }
  return s.str();
}

std::string reports_markdown(const std::vector<MetricReport>& reports) {
  std::ostringstream s;
  s << "| Method | Scenario | MAE | RMSE | Scenes |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    s << "| " << r.name << " | " << scenario_name(r.scenario) << " | " << fixed(r.error.mae) << " | "
      << fixed(r.error.rmse) << " | " << r.scenes.size() << " |\n";
  }
  return s.str();
}

std::string scenes_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream s;
  s << "name,scene,mae,rmse\n";
  for (const auto& r : reports)
    for (const auto& e : r.scenes) s << r.name << ',' << e.scene << ',' << fixed(e.error.mae) << ',' << fixed(e.error.rmse) << '\n';
  return s.str();
}

void write_reports(const std::filesystem::path& dir, const std::string& stem,
                   const std::vector<MetricReport>& reports) {
  std::filesystem::create_directories(dir);
  write_text(dir / (stem + ".csv"), reports_csv(reports));
  write_text(dir / (stem + ".md"), reports_markdown(reports));
  write_text(dir / (stem + "_scenes.csv"), scenes_csv(reports));
}

}  // namespace planelit::eval
