#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "planelit/eval/eval.hpp"
#include "planelit/transfer/train.hpp"

using namespace planelit;
using namespace planelit::eval;
using planelit::testing::random_matrix;

namespace {

gae::GaeConfig tiny_gae(int n, int out = 3) {
  gae::GaeConfig c;
  c.vertices = n;
  c.hidden1 = 4;
  c.hidden2 = 3;
  c.latent = 8;
  c.output_width = out;
  c.sigmoid_output = out == 1;
  return c;
}

struct Toy {
  dataset::SceneMeshes scene{mesh::make_icosphere(0),
                             mesh::translate_mesh(mesh::make_plane_mesh(4, 4, 4.0), Vec3(0, 0, mesh::kSupportHeight))};
  std::vector<dataset::Sample> samples;

  Toy() {
    lighting::SamplingOptions o;
    o.count = 4;
    o.support = lighting::SupportPlane{Vec3(0, 0, mesh::kSupportHeight), Vec3::UnitZ(), 0.5};
    for (std::uint64_t s = 0; s < 5; ++s) {
      samples.push_back(dataset::compute_sample(lighting::sample_lighting_environment(s, scene.object, o),
                                                Mat3::Identity(), scene.object, scene.plane));
    }
  }
};

}  // namespace

TEST(RelightError, Examples) {
  const Matrix gt = Matrix::Constant(5, 3, 0.4);
  EXPECT_EQ(relight_error(gt, gt).mae, 0.0);
  EXPECT_EQ(relight_error(gt, gt).rmse, 0.0);
  const ErrorPair e = relight_error(gt.array() + 0.1, gt);
  EXPECT_NEAR(e.mae, 0.1, 1e-12);
  EXPECT_NEAR(e.rmse, 0.1, 1e-12);
  Matrix a(2, 1), b(2, 1);
  a << 0.0, 0.0;
  b << 0.3, 0.4;
  EXPECT_NEAR(relight_error(a, b).mae, 0.35, 1e-15);
  EXPECT_NEAR(relight_error(a, b).rmse, std::sqrt(0.125), 1e-15);
}

TEST(RelightError, RejectsShapeMismatch) {
  EXPECT_THROW(relight_error(Matrix::Zero(4, 1), Matrix::Zero(4, 3)), std::invalid_argument);
  EXPECT_THROW(relight_error(Matrix::Zero(4, 1), Matrix::Zero(5, 1)), std::invalid_argument);
}

TEST(RelightError, PowerMeanSymmetryAndTranslation) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix p = random_matrix(7, 3, rng, 0.0, 1.0), g = random_matrix(7, 3, rng, 0.0, 1.0);
    const ErrorPair e = relight_error(p, g), r = relight_error(g, p);
    EXPECT_GE(e.rmse, e.mae);
    EXPECT_GE(e.mae, 0.0);
    EXPECT_EQ(e.mae, r.mae);
    EXPECT_EQ(e.rmse, r.rmse);
    const double delta = uniform(rng, -0.5, 0.5);
    EXPECT_NEAR(relight_error(g.array() + delta, g).mae, std::abs(delta), 1e-12);
  }
}

TEST(Report, PoolsOverAllVertices) {
  const std::vector<Matrix> gts{Matrix::Zero(2, 1), Matrix::Zero(6, 1)};
  const std::vector<Matrix> preds{Matrix::Constant(2, 1, 0.4), Matrix::Constant(6, 1, 0.2)};
  const MetricReport r = make_report("m", Scenario::Indoor, preds, gts, {"a", "b"});
  EXPECT_NEAR(r.error.mae, (0.8 + 1.2) / 8.0, 1e-15);
  EXPECT_NEAR(r.error.rmse, std::sqrt((2 * 0.16 + 6 * 0.04) / 8.0), 1e-15);
  ASSERT_EQ(r.scenes.size(), 2u);
  EXPECT_NEAR(r.scenes[0].error.mae, 0.4, 1e-15);
  EXPECT_THROW(make_report("m", Scenario::Indoor, preds, gts, {"a"}), std::invalid_argument);
  EXPECT_THROW(make_report("m", Scenario::Indoor, {}, {}, {}), std::invalid_argument);
}

TEST(Report, TablesCarryMaeAndRmse) {
  const MetricReport r = make_report("ours", Scenario::SpatiallyVarying, {Matrix::Constant(2, 1, 0.25)},
                                     {Matrix::Zero(2, 1)}, {"s0"});
  EXPECT_EQ(reports_csv({r}), "name,scenario,mae,rmse,scenes\nours,spatially-varying,0.250000,0.250000,1\n");
  EXPECT_NE(reports_markdown({r}).find("| ours | spatially-varying | 0.250000 | 0.250000 | 1 |"), std::string::npos);
  EXPECT_EQ(scenes_csv({r}), "name,scene,mae,rmse\nours,s0,0.250000,0.250000\n");
  EXPECT_EQ(scenario_from_name("outdoor"), Scenario::Outdoor);
  EXPECT_THROW(scenario_from_name("cave"), std::invalid_argument);
}

TEST(MeanField, SingleSampleReproducesItself) {
  Toy toy;
  const MeanFieldBaseline b = mean_field_baseline({toy.samples[0].object_oi});
  EXPECT_EQ(b.predict(), Matrix(toy.samples[0].object_oi));
  EXPECT_EQ(evaluate_baseline(b, toy.scene, {toy.samples[0]}, Scenario::Synthetic).error.mae, 0.0);
  EXPECT_THROW(mean_field_baseline({}), std::invalid_argument);
}

TEST(MeanField, PositiveErrorOnVariedLighting) {
  Toy toy;
  std::vector<Matrix> train;
  for (std::size_t i = 0; i < 3; ++i) train.push_back(toy.samples[i].object_oi);
  const MeanFieldBaseline b = mean_field_baseline(train);
  EXPECT_NEAR((b.predict() - (train[0] + train[1] + train[2]) / 3.0).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  const std::vector<dataset::Sample> held{toy.samples[3], toy.samples[4]};
  EXPECT_GT(evaluate_baseline(b, toy.scene, held, Scenario::Synthetic).error.mae, 0.0);
}

TEST(Ablation, IdenticalConfigsGiveIdenticalRowsAndMissingCheckpointIsNamed) {
  Toy toy;
  Rng rng(12);
  const int n_obj = static_cast<int>(toy.scene.object.size());
  gae::GaeModel plane_gae(tiny_gae(static_cast<int>(toy.scene.plane.size())), toy.scene.plane, rng);
  gae::GaeModel object_gae(tiny_gae(n_obj), toy.scene.object, rng);
  render::RenderGae renderer(tiny_gae(n_obj, 1), toy.scene.object, rng);
  transfer::Generator gen(8, rng);
  transfer::DiscriminatorConfig dc;
  dc.vertices = n_obj;
  dc.hidden1 = 4;
  dc.hidden2 = 3;
  dc.fc_width = 5;
  transfer::Discriminator disc(dc, toy.scene.object, rng);
  const auto dir = std::filesystem::temp_directory_path();
  transfer::save_transfer(dir / "planelit_ablation_a.ilnt", gen, disc);
  transfer::save_transfer(dir / "planelit_ablation_b.ilnt", gen, disc);

  Pipeline shared{&plane_gae, nullptr, &object_gae, &renderer};
  const auto reports = run_ablation({{"x", dir / "planelit_ablation_a.ilnt"}, {"x", dir / "planelit_ablation_b.ilnt"}},
                                    shared, toy.scene, toy.samples, Scenario::Synthetic);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports_csv({reports[0]}), reports_csv({reports[1]}));
  EXPECT_GE(reports[0].error.rmse, reports[0].error.mae);

  Pipeline direct = shared;
  direct.generator = &gen;
  EXPECT_EQ(evaluate_pipeline(direct, toy.scene, toy.samples, "x", Scenario::Synthetic).error.mae,
            reports[0].error.mae);

  try {
    run_ablation({{"full", dir / "planelit_ablation_a.ilnt"}, {"pair-only", dir / "planelit_no_such.ilnt"}}, shared,
                 toy.scene, toy.samples, Scenario::Synthetic);
    FAIL() << "expected a missing-checkpoint error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("pair-only"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("planelit_no_such.ilnt"), std::string::npos);
  }
}
