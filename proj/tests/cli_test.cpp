#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "planelit/lighting/environment.hpp"
#include "planelit/lighting/hdr.hpp"
#include "planelit/render/image.hpp"
#include "planelit/render/scene.hpp"

namespace fs = std::filesystem;
using namespace planelit;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("planelit_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const fs::path log = work_dir() / "last_run.log";
  const std::string cmd = "cd '" + work_dir().string() + "' && '" + PLANELIT_BIN + "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  r.output.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = file_bytes(e.path());
  }
  return out;
}

void expect_same_tree(const fs::path& a, const fs::path& b) {
  const auto ta = tree_bytes(work_dir() / a), tb = tree_bytes(work_dir() / b);
  ASSERT_FALSE(ta.empty());
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) {
    ASSERT_TRUE(tb.count(name)) << name;
    EXPECT_TRUE(bytes == tb.at(name)) << name << " differs between runs";
  }
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(work_dir() / p) << text; }

void write_fixtures() {
  render::SceneSetup scene;
  scene.camera.fx = scene.camera.fy = 200.0;
  scene.camera.cx = 80.0;
  scene.camera.cy = 60.0;
  const Vec3 eye(0, -6, 3), target(0, 0, -1);
  const Vec3 f = (target - eye).normalized();
  const Vec3 r = f.cross(Vec3::UnitZ()).normalized();
  const Vec3 d = f.cross(r);
  scene.camera.rotation.row(0) = r;
  scene.camera.rotation.row(1) = d;
  scene.camera.rotation.row(2) = f;
  scene.camera.translation = -scene.camera.rotation * eye;
  scene.plane.origin = Vec3(0, 0, -1);
  std::ofstream(work_dir() / "scene.json") << render::to_json(scene).dump(1);

  lighting::LightingEnvironment env;
  env.lights.push_back({Vec3(2, -1, 3), 6.0});
  env.lights.push_back({Vec3(-3, 2, 2), 1.0});
  lighting::save_environment((work_dir() / "env.json").string(), env);

  lighting::EnvironmentMap map(32, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) map.pixel(x, y) = ((x < 4 && y < 4) ? Vec3(8, 7, 6) : Vec3(0.2, 0.2, 0.25)).transpose();
  lighting::write_hdr(work_dir() / "sky.hdr", map);
}

const std::string kData = "--object icosphere1 --plane plane8 --count 24 --seed 3";
const std::string kTiny = "--epochs 3 --batch 8 --latent 16 --seed 5";

/// Builds a dataset and a full checkpoint set once, twice over, for the tests below.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    write_fixtures();
    for (const std::string suffix : {"", "_again"}) {
      ASSERT_EQ(run("gen-data --synthetic " + kData + " --jobs 2 --out data" + suffix).code, 0);
      for (const std::string stage : {"gae-plane", "gae-object", "renderer", "transfer"}) {
        const RunResult r = run("train --stage " + stage + " --data data --out ck" + suffix + " " + kTiny);
        ASSERT_EQ(r.code, 0) << r.output;
      }
    }
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("relight --checkpoints ck").code, 1);
  EXPECT_EQ(run("train --stage nonsense --data data").code, 1);
  const RunResult r = run("median-cut --hdr sky.hdr --n 6 --out mc_bad");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("power of two"), std::string::npos) << r.output;
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
  const RunResult dep = run("train --stage transfer --data data --out empty_ck");
  EXPECT_EQ(dep.code, 2);
  EXPECT_NE(dep.output.find("gae-plane"), std::string::npos) << dep.output;
  write_text("broken.hdr", "not a radiance file");
  EXPECT_EQ(run("median-cut --hdr broken.hdr --out mc_broken").code, 2);
}

TEST_F(Cli, HelpListsTaggedDefaults) {
  for (const std::string cmd : {"gen-data", "train", "relight", "eval", "median-cut"}) {
    const RunResult r = run(cmd + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.output.find("--seed"), std::string::npos) << cmd;
    EXPECT_NE(r.output.find("(design default)"), std::string::npos) << cmd;
  }
  EXPECT_NE(run("median-cut --help").output.find("[default: 32] (reference setting)"), std::string::npos);
}

TEST_F(Cli, GenDataAndTrainingAreByteIdentical) {
  expect_same_tree("data", "data_again");
  expect_same_tree("ck", "ck_again");
}

TEST_F(Cli, EvalReportsBaselineAndThresholds) {
  const RunResult ok = run("eval --data data --checkpoints ck --baseline mean-field --out ev");
  ASSERT_EQ(ok.code, 0) << ok.output;
  const std::string csv = file_bytes(work_dir() / "ev/report.csv");
  EXPECT_EQ(csv.rfind("name,scenario,mae,rmse,scenes\n", 0), 0u);
  EXPECT_NE(csv.find("\nmean-field,synthetic,"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_dir() / "ev/report.md"));
  ASSERT_EQ(run("eval --data data --checkpoints ck --baseline mean-field --out ev_again").code, 0);
  expect_same_tree("ev", "ev_again");

  EXPECT_EQ(run("eval --data data --checkpoints ck --out ev_fail --max-mae 1e-9").code, 3);
  EXPECT_EQ(run("eval --data data --checkpoints ck --out ev_fail --baseline mean-field --min-improvement 0.99").code,
            3);
}

TEST_F(Cli, RelightIsDeterministicAndVariesWithPosition) {
  const std::string args =
      "relight --checkpoints ck --scene scene.json --lighting env.json --position 0,0 --position 1.2,0.8 "
      "--width 160 --height 120 --out ";
  ASSERT_EQ(run(args + "rl").code, 0);
  ASSERT_EQ(run(args + "rl_again").code, 0);
  expect_same_tree("rl", "rl_again");

  const auto summary = nlohmann::json::parse(file_bytes(work_dir() / "rl/relight.json"));
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_NE(summary[0]["mean_intensity"].get<double>(), summary[1]["mean_intensity"].get<double>());

  // Without --image the composite sits on the neutral gray backdrop.
  const render::Image img = render::read_png(work_dir() / "rl/relit_0.png");
  EXPECT_EQ(img.width, 160);
  EXPECT_EQ(img.height, 120);
  const std::uint8_t* corner = img.pixel(0, 0);
  EXPECT_EQ(corner[0], 128);
  EXPECT_EQ(corner[1], 128);
  EXPECT_EQ(corner[2], 128);
  EXPECT_NE(img, render::gray_backdrop(160, 120));
}

TEST_F(Cli, MedianCutConservesEnergyAndIsDeterministic) {
  const RunResult r = run("median-cut --hdr sky.hdr --n 8 --out mc");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto pos = r.output.find("relative error ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.output.substr(pos + 15)), 1e-6);
  ASSERT_EQ(run("median-cut --hdr sky.hdr --n 8 --out mc_again").code, 0);
  expect_same_tree("mc", "mc_again");
  EXPECT_EQ(lighting::load_environment((work_dir() / "mc/lights.json").string()).lights.size(), 8u);
  EXPECT_TRUE(fs::exists(work_dir() / "mc/regions.png"));
}

TEST_F(Cli, ConfigFileSuppliesFlagsAndCommandLineWins) {
  write_text("mc.json", R"({"hdr": "sky.hdr", "n": 4, "out": "mc_cfg"})");
  ASSERT_EQ(run("median-cut --config mc.json").code, 0);
  EXPECT_EQ(lighting::load_environment((work_dir() / "mc_cfg/lights.json").string()).lights.size(), 4u);
  ASSERT_EQ(run("median-cut --config mc.json --n 2").code, 0);
  EXPECT_EQ(lighting::load_environment((work_dir() / "mc_cfg/lights.json").string()).lights.size(), 2u);
  write_text("bad.json", "{ not json");
  EXPECT_EQ(run("median-cut --config bad.json").code, 1);
}
