#include "commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "planelit/dataset/dataset.hpp"
#include "planelit/eval/eval.hpp"
#include "planelit/lighting/estimate.hpp"
#include "planelit/lighting/median_cut.hpp"
#include "planelit/render/composite.hpp"
#include "planelit/render/render_gae.hpp"
#include "planelit/transfer/train.hpp"

namespace planelit::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStages[] = {"gae-plane", "gae-object", "renderer", "transfer"};

std::string out_dir(const Common& c, const char* fallback) { return c.out.empty() ? fallback : c.out; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < trace.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, trace[e]);
    out << buf;
  }
}

nlohmann::json read_sidecar(const fs::path& checkpoint) {
  std::ifstream in(gae::sidecar_path(checkpoint));
  if (!in) throw std::runtime_error("cannot read " + gae::sidecar_path(checkpoint).string());
  return nlohmann::json::parse(in);
}

// Throws naming the stage when its checkpoint is absent.
fs::path require_stage(const fs::path& dir, const std::string& stage, const std::string& needed_by) {
  const fs::path p = dir / stage_checkpoint(stage);
  if (!fs::is_regular_file(p)) {
    throw std::runtime_error(needed_by + ": missing dependency: stage '" + stage + "' has no checkpoint at " +
                             p.string() + " (run: train --stage " + stage + ")");
  }
  return p;
}

gae::GaeTrainOptions gae_options(const TrainOptions& o, int stage_index) {
  gae::GaeTrainOptions t;
  t.epochs = o.epochs > 0 ? o.epochs : 400;
  t.batch = o.batch > 0 ? o.batch : 256;
  t.adam.lr = o.lr;
  t.seed = derive_seed(o.common.seed, static_cast<std::uint64_t>(stage_index));
  t.on_epoch = [epochs = t.epochs](int epoch, double loss) {
    if ((epoch + 1) % 10 == 0 || epoch + 1 == epochs) {
      std::cerr << "epoch " << epoch + 1 << "/" << epochs << " loss " << fmt(loss) << '\n';
    }
  };
  return t;
}

gae::GaeConfig gae_config(const TrainOptions& o, int vertices) {
  gae::GaeConfig c;
  c.vertices = vertices;
  c.latent = o.latent;
  c.dropout = o.dropout;
  return c;
}

// Stage sidecar metadata: the meshes the checkpoint was trained on.
nlohmann::json stage_meta(const std::string& stage, const dataset::DatasetManifest& m) {
  return {{"stage", stage},
          {"object", m.object},
          {"plane", m.plane},
          {"plane_extent", m.settings.value("plane_extent", 4.0)},
          {"estimate", m.settings.value("estimate", nlohmann::json::object())},
          {"dataset_seed", m.master_seed}};
}

int train_gae_stage(const TrainOptions& o, const fs::path& out, const dataset::DatasetManifest& m,
                    const dataset::SceneMeshes& scene, const std::vector<dataset::Sample>& train, bool plane) {
  const mesh::Mesh& domain = plane ? scene.plane : scene.object;
  std::vector<Matrix> features, targets;
  for (const auto& s : train) {
    if (plane) {
      features.push_back(gae::assemble_features(domain.normals(), s.plane_oi_estimated));
      targets.push_back(s.plane_oi_estimated);
    } else {
      features.push_back(gae::assemble_features(domain.normals(), s.object_oi));
      targets.push_back(s.object_oi);
      features.push_back(gae::assemble_features(mesh::rotate_mesh(domain, s.rotation).normals(), s.rotated_oi));
      targets.push_back(s.rotated_oi);
    }
  }
  Rng init(o.common.seed);
  gae::GaeModel model(gae_config(o, static_cast<int>(domain.size())), domain, init);
  const auto result = gae::train_gae(model, features, targets, gae_options(o, plane ? 1 : 2));
  const std::string stage = plane ? "gae-plane" : "gae-object";
  gae::save_gae(out / stage_checkpoint(stage), model, stage_meta(stage, m));
  write_loss_csv(out / (plane ? "gae_plane_loss.csv" : "gae_object_loss.csv"), result.loss_trace);
  std::cout << stage << ": " << features.size() << " fields, final loss " << fmt(result.loss_trace.back()) << '\n';
  return kSuccess;
}

int train_renderer_stage(const TrainOptions& o, const fs::path& out, const dataset::DatasetManifest& m,
                         const dataset::SceneMeshes& scene, const std::vector<dataset::Sample>& train) {
  std::vector<Matrix> oi, intensity;
  for (const auto& s : train) {
    oi.push_back(s.object_oi);
    intensity.push_back(s.object_intensity);
  }
  // Unlit examples anchor the zero-light end of the intensity range.
  const auto n = static_cast<Eigen::Index>(scene.object.size());
  const long dark = o.dark_fraction > 0.0
                        ? std::max(1L, std::lround(o.dark_fraction * static_cast<double>(train.size())))
                        : 0L;
  for (long k = 0; k < dark; ++k) {
    oi.push_back(Matrix::Zero(n, 3));
    intensity.push_back(Matrix::Zero(n, 1));
  }
  Rng init(o.common.seed);
  gae::GaeConfig config = render::render_gae_config(static_cast<int>(n));
  config.latent = o.latent;
  config.dropout = o.dropout;
  render::RenderGae renderer(config, scene.object, init);
  const auto result = render::train_render_gae(renderer, scene.object, oi, intensity, gae_options(o, 3));
  nlohmann::json meta = stage_meta("renderer", m);
  meta["dark_samples"] = dark;
  render::save_render_gae(out / stage_checkpoint("renderer"), renderer, meta);
  write_loss_csv(out / "renderer_loss.csv", result.loss_trace);
  std::cout << "renderer: " << oi.size() << " fields (" << dark << " unlit), final loss "
            << fmt(result.loss_trace.back()) << '\n';
  return kSuccess;
}

int train_transfer_stage(const TrainOptions& o, const fs::path& out, const dataset::DatasetManifest& m,
                         const dataset::SceneMeshes& scene, const std::vector<dataset::Sample>& train) {
  const fs::path plane_path = require_stage(out, "gae-plane", "train --stage transfer");
  const fs::path object_path = require_stage(out, "gae-object", "train --stage transfer");
  gae::GaeModel plane_gae = gae::load_gae(plane_path, scene.plane);
  gae::GaeModel object_gae = gae::load_gae(object_path, scene.object);
  if (plane_gae.config().latent != object_gae.config().latent) {
    throw std::runtime_error("train --stage transfer: plane and object GAE latent widths differ");
  }
  std::vector<Matrix> plane_oi, object_oi;
  for (const auto& s : train) {
    plane_oi.push_back(s.plane_oi_estimated);
    object_oi.push_back(s.object_oi);
  }
  const transfer::TransferData data = transfer::prepare_transfer_data(
      plane_gae, scene.plane.normals(), plane_oi, object_gae, scene.object.normals(), object_oi);

  Rng init(o.common.seed);
  transfer::Generator gen(object_gae.config().latent, init);
  transfer::DiscriminatorConfig dc;
  dc.vertices = static_cast<int>(scene.object.size());
  transfer::Discriminator disc(dc, scene.object, init);

  transfer::TransferOptions to;
  to.epochs = o.epochs > 0 ? o.epochs : 100;
  to.batch = o.batch > 0 ? o.batch : 8;
  to.unroll_k = o.unroll_k;
  to.generator_adam = {o.lr_g, o.beta1, o.beta2, 1e-8};
  to.discriminator_adam = {o.lr_d, o.beta1, o.beta2, 1e-8};
  to.weights = {o.beta_pair, o.beta_shading, o.beta_smooth};
  to.literal_fake_term = o.literal_fake_term;
  to.seed = derive_seed(o.common.seed, 4);

  nlohmann::json meta = stage_meta("transfer", m);
  meta["weights"] = {{"pair", o.beta_pair}, {"shading", o.beta_shading}, {"smooth", o.beta_smooth}};
  meta["unroll_k"] = o.unroll_k;
  const fs::path ckpt = out / (o.name + ".ilnt");
  const auto log = transfer::train_transfer(gen, disc, object_gae, scene.object, data, to,
                                            [&](const transfer::EpochStats& e) {
                                              transfer::save_transfer(ckpt, gen, disc, meta);
                                              std::cerr << "epoch " << e.epoch + 1 << "/" << to.epochs
                                                        << " loss_D " << fmt(e.mean.loss_d) << " loss_G "
                                                        << fmt(e.mean.loss_g) << '\n';
                                            });
  if (log.empty()) transfer::save_transfer(ckpt, gen, disc, meta);
  transfer::write_transfer_log(out / (o.name + "_loss.csv"), log);
  std::cout << "transfer: " << data.size() << " pairs, " << log.size() << " epochs -> " << ckpt.string() << '\n';
  return kSuccess;
}

std::vector<double> read_numbers(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read intensities file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::replace_if(text.begin(), text.end(), [](char c) { return c == ',' || c == '[' || c == ']'; }, ' ');
  std::istringstream s(text);
  std::vector<double> v;
  for (double x; s >> x;) v.push_back(x);
  if (!s.eof()) throw UsageError("intensities file " + path.string() + " holds a non-numeric token");
  return v;
}

Eigen::Vector2d parse_position(const std::string& text) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_a = 0, used_b = 0;
    const std::string sa = text.substr(0, comma), sb = text.substr(comma + 1);
    const double a = std::stod(sa, &used_a);
    const double b = std::stod(sb, &used_b);
    if (used_a != sa.size() || used_b != sb.size()) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::exception&) {
    throw UsageError("--position expects 'a,b' plane coordinates, got '" + text + "'");
  }
}

std::uint8_t tone(double linear) { return render::linear_to_srgb(linear / (1.0 + linear)); }

}  // namespace

std::string stage_checkpoint(const std::string& stage) {
  if (stage == "gae-plane") return "gae_plane.ilnt";
  if (stage == "gae-object") return "gae_object.ilnt";
  if (stage == "renderer") return "renderer.ilnt";
  if (stage == "transfer") return "transfer.ilnt";
  throw UsageError("unknown stage '" + stage + "'");
}

int cmd_gen_data(const GenDataOptions& o) {
  if (o.synthetic == o.real) throw UsageError("gen-data: pass exactly one of --synthetic or --real");
  if (o.common.out.empty()) throw UsageError("gen-data: --out is required");
  if (o.fractions.size() != 3) throw UsageError("gen-data: --fractions takes three values");
  const std::array<double, 3> fractions{o.fractions[0], o.fractions[1], o.fractions[2]};
  dataset::DatasetManifest m;
  if (o.synthetic) {
    dataset::GenerateOptions g;
    g.master_seed = o.common.seed;
    g.count = o.count;
    g.object = o.object;
    g.plane = o.plane;
    g.plane_extent = o.plane_extent;
    g.jobs = o.common.jobs;
    g.sampling.count = o.lights;
    g.fractions = fractions;
    m = dataset::generate_synthetic(o.common.out, g);
  } else {
    if (o.hdr.empty()) throw UsageError("gen-data --real: pass at least one --hdr file");
    dataset::IngestOptions g;
    g.master_seed = o.common.seed;
    g.rotations = o.rotations;
    g.lights = o.lights;
    g.object = o.object;
    g.plane = o.plane;
    g.plane_extent = o.plane_extent;
    g.jobs = o.common.jobs;
    g.fractions = fractions;
    std::vector<fs::path> files(o.hdr.begin(), o.hdr.end());
    m = dataset::ingest_real(files, o.common.out, g);
    for (const auto& s : m.skipped) std::cerr << "skipped " << s << '\n';
  }
  std::cout << "wrote " << m.samples.size() << " samples (train " << m.count(dataset::Split::Train) << ", val "
            << m.count(dataset::Split::Val) << ", test " << m.count(dataset::Split::Test) << ") to "
            << o.common.out << '\n';
  return kSuccess;
}

int cmd_train(const TrainOptions& o) {
  if (std::find(std::begin(kStages), std::end(kStages), o.stage) == std::end(kStages)) {
    throw UsageError("train: --stage must be one of gae-plane, gae-object, renderer, transfer");
  }
  if (o.data.empty()) throw UsageError("train: --data is required");
  const fs::path out = out_dir(o.common, "checkpoints");
  // Check stage order before touching the data.
  if (o.stage == "transfer") {
    require_stage(out, "gae-plane", "train --stage transfer");
    require_stage(out, "gae-object", "train --stage transfer");
  }
  const dataset::DatasetManifest m = dataset::read_manifest(o.data);
  const dataset::SceneMeshes scene = dataset::scene_meshes(m);
  const std::vector<dataset::Sample> train = dataset::load_split(o.data, m, dataset::Split::Train);
  if (train.empty()) throw std::runtime_error("train: the dataset's train split is empty");
  fs::create_directories(out);
  if (o.stage == "gae-plane") return train_gae_stage(o, out, m, scene, train, true);
  if (o.stage == "gae-object") return train_gae_stage(o, out, m, scene, train, false);
  if (o.stage == "renderer") return train_renderer_stage(o, out, m, scene, train);
  return train_transfer_stage(o, out, m, scene, train);
}

int cmd_relight(const RelightOptions& o) {
  if (o.scene.empty()) throw UsageError("relight: --scene is required");
  if (o.lighting.empty() == o.intensities.empty()) {
    throw UsageError("relight: pass exactly one of --lighting or --intensities");
  }
  const std::vector<std::string> positions = o.positions.empty() ? std::vector<std::string>{"0,0"} : o.positions;
  if (!o.intensities.empty() && o.intensities.size() != 1 && o.intensities.size() != positions.size()) {
    throw UsageError("relight: pass one --intensities file, or one per --position");
  }
  const fs::path dir = o.checkpoints;
  fs::path paths[4];
  for (int k = 0; k < 4; ++k) {
    const std::string stage = kStages[k];
    paths[k] = k == 3 ? dir / (o.transfer + ".ilnt") : dir / stage_checkpoint(stage);
    if (!fs::is_regular_file(paths[k])) {
      throw UsageError("relight: missing checkpoint for stage '" + stage + "': " + paths[k].string());
    }
  }
  const nlohmann::json meta = read_sidecar(paths[0]);
  const mesh::Mesh plane = mesh::translate_mesh(
      mesh::mesh_from_spec(meta.at("plane").get<std::string>(), meta.value("plane_extent", 4.0)),
      Vec3(0, 0, mesh::kSupportHeight));
  const mesh::Mesh object = mesh::mesh_from_spec(read_sidecar(paths[1]).at("object").get<std::string>());
  lighting::EstimateOptions estimate;
  if (const auto e = meta.value("estimate", nlohmann::json::object()); e.is_object()) {
    estimate.smoothing = e.value("smoothing", estimate.smoothing);
    estimate.iterations = e.value("iterations", estimate.iterations);
  }
  gae::GaeModel plane_gae = gae::load_gae(paths[0], plane);
  gae::GaeModel object_gae = gae::load_gae(paths[1], object);
  render::RenderGae renderer = render::load_render_gae(paths[2], object);
  transfer::Generator gen = transfer::load_generator(paths[3]);

  const render::SceneSetup scene = render::load_scene(o.scene);
  const render::Image backdrop = o.image.empty() ? render::gray_backdrop(o.width, o.height) : render::read_png(o.image);
  std::optional<lighting::LightingEnvironment> env;
  if (!o.lighting.empty()) env = lighting::load_environment(o.lighting);
  const fs::path out = out_dir(o.common, "relight");
  fs::create_directories(out);

  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Eigen::Vector2d pos = parse_position(positions[k]);
    Matrix c;
    if (env) {
      const mesh::Mesh patch = render::place_on_plane(plane, scene.plane, pos, o.scale);
      c = lighting::reflected_radiance(lighting::compute_oi(patch, *env), patch.normals());
    } else {
      const auto values = read_numbers(o.intensities[o.intensities.size() == 1 ? 0 : k]);
      if (values.size() != plane.size()) {
        throw UsageError("relight: intensities file holds " + std::to_string(values.size()) + " values, plane has " +
                         std::to_string(plane.size()) + " vertices");
      }
      c = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(values.size()), 1);
    }
    const Matrix plane_oi = lighting::estimate_plane_oi(plane, c, estimate);
    const Matrix oi = transfer::predict_object_oi(plane_gae, plane.normals(), plane_oi, gen, object_gae);
    const Matrix intensity = renderer.intensity(object.normals(), oi);
    const mesh::Mesh placed = render::place_on_plane(object, scene.plane, pos, o.scale);

    nlohmann::json entry = {{"position", {pos.x(), pos.y()}}, {"mean_intensity", intensity.mean()}};
    std::optional<render::Shadow> shadow;
    try {
      const Vec3 dir = scene.plane.basis() * render::dominant_light_direction(oi);
      shadow = render::cast_shadow(placed, scene.plane, dir);
      entry["light_direction"] = {dir.x(), dir.y(), dir.z()};
      if (!shadow->emitted) {
        std::cerr << "position " << positions[k] << ": " << shadow->warning << '\n';
        entry["shadow_warning"] = shadow->warning;
      }
    } catch (const std::domain_error& e) {
      std::cerr << "position " << positions[k] << ": no shadow, " << e.what() << '\n';
      entry["shadow_warning"] = e.what();
    }
    const render::Image result = render::composite(backdrop, placed, intensity, scene.plane, scene.camera,
                                                   shadow ? &*shadow : nullptr);
    const fs::path file = out / ("relit_" + std::to_string(k) + ".png");
    render::write_png(file, result);
    entry["file"] = file.filename().string();
    summary.push_back(entry);
    std::cout << file.string() << '\n';
  }
  std::ofstream(out / "relight.json") << summary.dump(2) << '\n';
  return kSuccess;
}

int cmd_eval(const EvalOptions& o) {
  if (o.data.empty()) throw UsageError("eval: --data is required");
  if (!o.baseline.empty() && o.baseline != "mean-field") {
    throw UsageError("eval: --baseline supports only 'mean-field'");
  }
  if (o.min_improvement > 0.0 && o.baseline.empty()) {
    throw UsageError("eval: --min-improvement needs --baseline mean-field");
  }
  const dataset::DatasetManifest m = dataset::read_manifest(o.data);
  const dataset::Split split = dataset::split_from_name(o.split);
  const std::vector<dataset::Sample> samples = dataset::load_split(o.data, m, split);
  if (samples.empty()) throw std::runtime_error("eval: split '" + o.split + "' is empty");
  const dataset::SceneMeshes scene = dataset::scene_meshes(m);
  const eval::Scenario scenario =
      o.scenario.empty() ? (m.source == "real" ? eval::Scenario::Indoor : eval::Scenario::Synthetic)
                         : eval::scenario_from_name(o.scenario);

  const fs::path dir = o.checkpoints;
  gae::GaeModel plane_gae = gae::load_gae(require_stage(dir, "gae-plane", "eval"), scene.plane);
  gae::GaeModel object_gae = gae::load_gae(require_stage(dir, "gae-object", "eval"), scene.object);
  std::optional<render::RenderGae> renderer;
  if (!o.analytic_shading) renderer.emplace(render::load_render_gae(require_stage(dir, "renderer", "eval"), scene.object));
  const fs::path gen_path = dir / (o.transfer + ".ilnt");
  if (!fs::is_regular_file(gen_path)) {
    throw std::runtime_error("eval: missing dependency: stage 'transfer' has no checkpoint at " + gen_path.string());
  }
  transfer::Generator gen = transfer::load_generator(gen_path);
  eval::Pipeline pipeline{&plane_gae, &gen, &object_gae, renderer ? &*renderer : nullptr};

  std::vector<eval::MetricReport> reports{eval::evaluate_pipeline(pipeline, scene, samples, o.transfer, scenario)};
  if (!o.ablation.empty()) {
    std::vector<eval::AblationConfig> configs;
    for (const auto& a : o.ablation) {
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("eval: --ablation expects name=checkpoint, got '" + a + "'");
      configs.push_back({a.substr(0, eq), a.substr(eq + 1)});
    }
    for (auto& r : eval::run_ablation(configs, pipeline, scene, samples, scenario)) reports.push_back(std::move(r));
  }
  if (!o.baseline.empty()) {
    std::vector<Matrix> train_oi;
    for (const auto& s : dataset::load_split(o.data, m, dataset::Split::Train)) train_oi.push_back(s.object_oi);
    reports.push_back(eval::evaluate_baseline(eval::mean_field_baseline(train_oi), scene, samples, scenario));
  }
  const fs::path out = out_dir(o.common, "eval");
  eval::write_reports(out, "report", reports);
  std::cout << eval::reports_markdown(reports);

  const double ours = reports.front().error.mae;
  if (o.max_mae > 0.0 && !(ours < o.max_mae)) {
    throw ThresholdFailure("eval: MAE " + fmt(ours) + " is not below the threshold " + fmt(o.max_mae));
  }
  if (o.min_improvement > 0.0) {
    const double base = reports.back().error.mae;
    if (!(ours <= (1.0 - o.min_improvement) * base)) {
      throw ThresholdFailure("eval: MAE " + fmt(ours) + " does not improve on the mean-field baseline " + fmt(base) +
                             " by " + fmt(100.0 * o.min_improvement) + "%");
    }
  }
  return kSuccess;
}

int cmd_median_cut(const MedianCutOptions& o) {
  if (o.hdr.empty()) throw UsageError("median-cut: --hdr is required");
  if (o.n < 1 || (o.n & (o.n - 1)) != 0) throw UsageError("median-cut: --n must be a power of two, got " + std::to_string(o.n));
  if (!(o.radius > 0.0)) throw UsageError("median-cut: --radius must be positive");
  const lighting::EnvironmentMap map = lighting::read_hdr(o.hdr);
  const lighting::MedianCutResult r = lighting::median_cut(map, o.n, o.radius);
  const fs::path out = out_dir(o.common, "median_cut");
  fs::create_directories(out);
  lighting::save_environment((out / "lights.json").string(), r.environment);

  render::Image img(map.width, map.height);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const auto p = map.pixel(x, y);
      std::uint8_t* px = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = tone(p(c));
    }
  }
  for (const auto& reg : r.regions) {
    for (int y = reg.y0; y < reg.y1; ++y) {
      for (int x = reg.x0; x < reg.x1; ++x) {
        if (x != reg.x0 && y != reg.y0 && x != reg.x1 - 1 && y != reg.y1 - 1) continue;
        std::uint8_t* px = img.pixel(x, y);
        px[0] = 255;
        px[1] = 0;
        px[2] = 0;
      }
    }
  }
  render::write_png(out / "regions.png", img);

  const double map_energy = lighting::texel_energy(map).sum();
  const double light_energy = r.environment.total_intensity();
  const double rel = map_energy > 0.0 ? std::abs(light_energy - map_energy) / map_energy : std::abs(light_energy);
  char line[160];
  std::snprintf(line, sizeof line, "energy conservation: map %.9e lights %.9e relative error %.3e", map_energy,
                light_energy, rel);
  std::cout << r.regions.size() << " regions -> " << (out / "lights.json").string() << '\n' << line << '\n';
  return kSuccess;
}

}  // namespace planelit::cli
