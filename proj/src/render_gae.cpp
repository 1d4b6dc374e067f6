#include "planelit/render/render_gae.hpp"

#include <stdexcept>
#include <string>

namespace planelit::render {

namespace {

gae::GaeModel checked(gae::GaeModel model) {
  if (model.config().output_width != 1 || !model.config().sigmoid_output) {
    throw std::invalid_argument("RenderGae: model must have a single sigmoid output channel");
  }
  return model;
}

}  // namespace

gae::GaeConfig render_gae_config(int vertices) {
  gae::GaeConfig c;
  c.vertices = vertices;
  c.output_width = 1;
  c.sigmoid_output = true;
  return c;
}

RenderGae::RenderGae(const gae::GaeConfig& config, const mesh::Mesh& object, Rng& rng)
    : model_(checked(gae::GaeModel(config, object, rng))) {}

RenderGae::RenderGae(gae::GaeModel model) : model_(checked(std::move(model))) {}

Matrix RenderGae::intensity(const Matrix3X& normals, const Matrix& oi) {
  return model_.decode(model_.encode(gae::assemble_features(normals, oi)));
}

Matrix render_intensity(RenderGae& renderer, const mesh::Mesh& object, const Matrix& oi) {
  if (object.size() != renderer.vertices() || oi.rows() != object.size() || oi.cols() != 3) {
    throw std::invalid_argument("render_intensity: renderer expects " + std::to_string(renderer.vertices()) +
                                " vertices, got mesh " + std::to_string(object.size()) + " and field " +
                                std::to_string(oi.rows()) + "x" + std::to_string(oi.cols()));
  }
  return renderer.intensity(object.normals(), oi).replicate(1, 3);
}

gae::GaeTrainResult train_render_gae(RenderGae& renderer, const mesh::Mesh& object, const std::vector<Matrix>& oi,
                                     const std::vector<Matrix>& intensities, const gae::GaeTrainOptions& options) {
  std::vector<Matrix> features;
  features.reserve(oi.size());
  for (const Matrix& f : oi) features.push_back(gae::assemble_features(object.normals(), f));
  return gae::train_gae(renderer.model(), features, intensities, options);
}

void save_render_gae(const std::filesystem::path& path, RenderGae& renderer, const nlohmann::json& extra) {
  gae::save_gae(path, renderer.model(), extra);
}

RenderGae load_render_gae(const std::filesystem::path& path, const mesh::Mesh& object) {
  return RenderGae(gae::load_gae(path, object));
}

}  // namespace planelit::render
