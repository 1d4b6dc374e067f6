#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"

namespace {

using namespace planelit::cli;

constexpr const char* kRef = " (reference setting)";
constexpr const char* kDesign = " (design default)";

std::string def(const std::string& what, const std::string& value, const char* tag) {
  return what + " [default: " + value + "]" + tag;
}

void add_common(CLI::App* sub, Common& c, const char* out_default) {
  sub->add_option("--seed", c.seed, def("Master seed for every random stream", "0", kDesign));
  sub->add_option("--out", c.out, def("Output path", out_default, kDesign));
  sub->add_option("--config", c.config, "JSON file supplying any flag; command-line flags take precedence");
  sub->add_option("--jobs", c.jobs, def("Worker threads for data generation", "1", kDesign))
      ->check(CLI::Range(1, 256));
}

struct Options {
  GenDataOptions gen;
  TrainOptions train;
  RelightOptions relight;
  EvalOptions eval;
  MedianCutOptions median;
};

std::unique_ptr<CLI::App> build(Options& o) {
  auto app = std::make_unique<CLI::App>("planelit: transfer plane illumination to virtual objects", "planelit");
  app->require_subcommand(1);
  app->set_version_flag("--version", "planelit 1.0");

  auto* gen = app->add_subcommand("gen-data", "Generate a synthetic dataset or ingest HDR environment maps");
  add_common(gen, o.gen.common, "(required)");
  auto* syn = gen->add_flag("--synthetic", o.gen.synthetic, "Sample random point-light environments");
  auto* real = gen->add_flag("--real", o.gen.real, "Ingest equirectangular .hdr maps via median cut");
  syn->excludes(real);
  gen->add_option("--count", o.gen.count, def("Synthetic environments (10000 at full scale)", "500", kDesign))
      ->check(CLI::PositiveNumber);
  gen->add_option("--object", o.gen.object, def("Object mesh: icosphereK, cube, capsule, planeN or a file", "icosphere2", kDesign));
  gen->add_option("--plane", o.gen.plane, def("Plane mesh: planeN or planeRxC", "plane32", kDesign));
  gen->add_option("--plane-extent", o.gen.plane_extent, def("Plane side length", "4", kDesign));
  gen->add_option("--lights", o.gen.lights, def("Point lights per environment", "32", kRef))->check(CLI::PositiveNumber);
  gen->add_option("--rotations", o.gen.rotations, def("Rotated copies per real map", "3", kRef))
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--hdr", o.gen.hdr, "Environment maps for --real");
  gen->add_option("--fractions", o.gen.fractions, def("Train, val and test fractions", "0.82 0.09 0.09", kRef))
      ->expected(3);

  auto* train = app->add_subcommand("train", "Train one pipeline stage");
  add_common(train, o.train.common, "checkpoints");
  train->add_option("--stage", o.train.stage, "Stage: gae-plane, gae-object, renderer or transfer")
      ->required()
      ->check(CLI::IsMember({"gae-plane", "gae-object", "renderer", "transfer"}));
  train->add_option("--data", o.train.data, "Dataset directory written by gen-data")->required();
  train->add_option("--epochs", o.train.epochs, def("Epochs", "400 (GAE, renderer) / 100 (transfer)", kRef))
      ->check(CLI::PositiveNumber);
  train->add_option("--batch", o.train.batch, def("Batch size", "256 (GAE, renderer)", kRef) + "; " +
                                                   def("transfer", "8", kDesign))
      ->check(CLI::PositiveNumber);
  train->add_option("--lr", o.train.lr, def("Adam learning rate for GAE and renderer", "0.001", kRef));
  train->add_option("--latent", o.train.latent, def("Latent code width", "256", kRef))->check(CLI::PositiveNumber);
  train->add_option("--dropout", o.train.dropout, def("Dropout before every graph convolution", "0.2", kRef))
      ->check(CLI::Range(0.0, 0.99));
  train->add_option("--unroll-k", o.train.unroll_k, def("Unrolled discriminator steps", "5", kDesign))
      ->check(CLI::NonNegativeNumber);
  train->add_option("--lr-g", o.train.lr_g, def("Generator learning rate", "0.0001", kRef));
  train->add_option("--lr-d", o.train.lr_d, def("Discriminator learning rate", "0.0004", kRef));
  train->add_option("--beta1", o.train.beta1, def("Transfer Adam beta1", "0.5", kRef));
  train->add_option("--beta2", o.train.beta2, def("Transfer Adam beta2", "0.99", kRef));
  train->add_option("--beta-pair", o.train.beta_pair, def("Pair loss weight", "1.0", kRef));
  train->add_option("--beta-shading", o.train.beta_shading, def("Shading loss weight", "0.3", kRef));
  train->add_option("--beta-smooth", o.train.beta_smooth, def("Smoothness loss weight", "2.5", kRef));
  train->add_flag("--literal-fake-term", o.train.literal_fake_term,
                  def("Discriminator fake term (1 - D(G(x)))^2 instead of D(G(x))^2", "off", kDesign));
  train->add_option("--dark-fraction", o.train.dark_fraction,
                    def("Unlit examples added to renderer training, as a fraction of the set", "1/64", kDesign))
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--name", o.train.name, def("Transfer checkpoint name", "transfer", kDesign));

  auto* relight = app->add_subcommand("relight", "Insert the relit object into an image");
  add_common(relight, o.relight.common, "relight");
  relight->add_option("--checkpoints", o.relight.checkpoints, def("Checkpoint directory", "checkpoints", kDesign));
  relight->add_option("--transfer", o.relight.transfer, def("Transfer checkpoint name", "transfer", kDesign));
  relight->add_option("--scene", o.relight.scene, "Scene JSON: camera intrinsics, extrinsics and plane pose")->required();
  relight->add_option("--image", o.relight.image, "Background PNG; a gray backdrop is used when omitted");
  auto* lighting = relight->add_option("--lighting", o.relight.lighting, "Lighting environment JSON in scene coordinates");
  auto* inten = relight->add_option("--intensities", o.relight.intensities,
                                    "Observed plane intensities, one file per --position or one shared");
  lighting->excludes(inten);
  relight->add_option("--position", o.relight.positions, def("Plane coordinates a,b of the object", "0,0", kDesign));
  relight->add_option("--scale", o.relight.scale, def("Object scale", "1", kDesign))->check(CLI::PositiveNumber);
  relight->add_option("--width", o.relight.width, def("Backdrop width", "640", kDesign))->check(CLI::PositiveNumber);
  relight->add_option("--height", o.relight.height, def("Backdrop height", "480", kDesign))->check(CLI::PositiveNumber);

  auto* ev = app->add_subcommand("eval", "Report relighting error on a dataset split");
  add_common(ev, o.eval.common, "eval");
  ev->add_option("--data", o.eval.data, "Dataset directory")->required();
  ev->add_option("--checkpoints", o.eval.checkpoints, def("Checkpoint directory", "checkpoints", kDesign));
  ev->add_option("--transfer", o.eval.transfer, def("Transfer checkpoint name", "transfer", kDesign));
  ev->add_option("--split", o.eval.split, def("Split to evaluate", "test", kDesign))
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--baseline", o.eval.baseline, "Add a baseline row: mean-field");
  ev->add_option("--scenario", o.eval.scenario,
                 def("Scenario tag: indoor, outdoor, spatially-varying, synthetic", "from dataset source", kDesign));
  ev->add_option("--ablation", o.eval.ablation, "Extra configuration rows as name=checkpoint");
  ev->add_flag("--analytic-shading", o.eval.analytic_shading,
               def("Shade predicted OI with clamp(L.n) instead of the renderer", "off", kDesign));
  ev->add_option("--max-mae", o.eval.max_mae, def("Fail with exit 3 unless MAE is below this", "off", kDesign));
  ev->add_option("--min-improvement", o.eval.min_improvement,
                 def("Fail with exit 3 unless MAE beats the baseline by this fraction", "off", kDesign));

  auto* mc = app->add_subcommand("median-cut", "Split an HDR map into point lights");
  add_common(mc, o.median.common, "median_cut");
  mc->add_option("--hdr", o.median.hdr, "Equirectangular Radiance .hdr map")->required();
  mc->add_option("--n", o.median.n, def("Number of lights, a power of two", "32", kRef));
  mc->add_option("--radius", o.median.radius, def("Light distance from the object", "4", kDesign));
  return app;
}

// First pass: learns which flags the command line sets.
CLI::App* dry_parse(CLI::App& app, const std::vector<std::string>& args) {
  for (auto* sub : app.get_subcommands({}))
    for (auto* opt : sub->get_options()) opt->required(false);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  app.parse(reversed);
  auto subs = app.get_subcommands();
  return subs.empty() ? nullptr : subs.front();
}

// Appends flags from the --config JSON that the command line did not set.
std::vector<std::string> merge_config(CLI::App* sub, std::vector<std::string> args, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must hold a JSON object");
  auto scalar = [&](const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number() || v.is_boolean()) return v.dump();
    throw UsageError("config key '" + key + "' must be a string, number or boolean");
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("config key '" + key + "' is not a flag of " + sub->get_name());
    if (opt->count() > 0) continue;
    if (opt->get_type_size() == 0) {
      if (!value.is_boolean()) throw UsageError("config key '" + key + "' must be true or false");
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key);
    if (value.is_array()) {
      for (const auto& v : value) args.push_back(scalar(key, v));
    } else {
      args.push_back(scalar(key, value));
    }
  }
  return args;
}

int run(const std::vector<std::string>& raw) {
  std::vector<std::string> args = raw;
  {
    Options probe;
    auto app = build(probe);
    CLI::App* sub = nullptr;
    try {
      sub = dry_parse(*app, args);
    } catch (const CLI::ParseError& e) {
      return app->exit(e) == 0 ? kSuccess : kUsage;
    }
    if (sub == nullptr) return kUsage;
    const std::string config = sub->get_option("--config")->as<std::string>();
    if (!config.empty()) args = merge_config(sub, args, config);
  }
  Options o;
  auto app = build(o);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app->parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app->exit(e) == 0 ? kSuccess : kUsage;
  }
  const std::string name = app->get_subcommands().front()->get_name();
  if (name == "gen-data") return cmd_gen_data(o.gen);
  if (name == "train") return cmd_train(o.train);
  if (name == "relight") return cmd_relight(o.relight);
  if (name == "eval") return cmd_eval(o.eval);
  return cmd_median_cut(o.median);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large training buffers in the heap instead of remapping them every step.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ThresholdFailure& e) {
    std::cerr << "threshold: " << e.what() << '\n';
    return kThreshold;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
