#include "planelit/transfer/networks.hpp"

#include <stdexcept>
#include <string>

namespace planelit::transfer {

Generator::Generator(int width, Rng& rng, double slope) : width_(width), slope_(slope) {
  if (width < 1) throw std::invalid_argument("Generator: width must be >= 1");
  for (int i = 0; i < kLayers; ++i) {
    const std::string name = "generator.fc" + std::to_string(i + 1);
    fc_[static_cast<std::size_t>(i)] = ad::Linear(name, width, width, rng);
    if (i < kLayers - 1) bn_[static_cast<std::size_t>(i)] = ad::BatchNorm("generator.bn" + std::to_string(i + 1), width);
  }
}

ad::Var Generator::operator()(ad::Tape& tape, const ad::Var& z, Mode mode) {
  if (z.cols() != width_) {
    throw std::invalid_argument("Generator: latent width " + std::to_string(z.cols()) + ", expected " +
                                std::to_string(width_));
  }
  ad::Var h = z;
  for (std::size_t i = 0; i < fc_.size(); ++i) {
    h = fc_[i](tape, h);
    if (i + 1 < fc_.size()) h = ad::leaky_relu(bn_[i](tape, h, mode), slope_);
  }
  return h;
}

Matrix Generator::generate(const Matrix& z) {
  ad::Tape tape;
  return (*this)(tape, tape.constant(z), Mode::Eval).value();
}

ad::StateRefs Generator::state() {
  ad::StateRefs refs;
  for (std::size_t i = 0; i < fc_.size(); ++i) {
    fc_[i].collect(refs);
    if (i < bn_.size()) bn_[i].collect(refs);
  }
  return refs;
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"vertices", c.vertices}, {"input_width", c.input_width}, {"hidden1", c.hidden1},
          {"hidden2", c.hidden2},   {"fc_width", c.fc_width},       {"slope", c.slope}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.vertices = j.at("vertices").get<int>();
  c.input_width = j.value("input_width", c.input_width);
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  c.fc_width = j.value("fc_width", c.fc_width);
  c.slope = j.value("slope", c.slope);
  return c;
}

Discriminator::Discriminator(const DiscriminatorConfig& config, const mesh::Mesh& object, Rng& rng)
    : config_(config), op_(mesh::build_graph_operator(object).matrix) {
  if (config_.vertices != object.size()) {
    throw std::invalid_argument("Discriminator: config expects " + std::to_string(config_.vertices) +
                                " vertices, mesh has " + std::to_string(object.size()));
  }
  conv1_ = gae::GcnLayer("discriminator.conv1", config_.input_width, config_.hidden1, false, rng);
  conv2_ = gae::GcnLayer("discriminator.conv2", config_.hidden1, config_.hidden2, false, rng);
  bn1_ = ad::BatchNorm("discriminator.bn1", config_.hidden1);
  bn2_ = ad::BatchNorm("discriminator.bn2", config_.hidden2);
  fc1_ = ad::Linear("discriminator.fc1", static_cast<Eigen::Index>(config_.vertices) * config_.hidden2,
                    config_.fc_width, rng);
  bn3_ = ad::BatchNorm("discriminator.bn3", config_.fc_width);
  fc2_ = ad::Linear("discriminator.fc2", config_.fc_width, 1, rng);
}

ad::Var Discriminator::operator()(ad::Tape& tape, const ad::Var& features, Mode mode) {
  const Eigen::Index n = config_.vertices;
  if (features.cols() != config_.input_width || features.rows() == 0 || features.rows() % n != 0) {
    throw std::invalid_argument("Discriminator: expected (B*" + std::to_string(n) + ")x" +
                                std::to_string(config_.input_width) + " features, got " +
                                std::to_string(features.rows()) + "x" + std::to_string(features.cols()));
  }
  const Eigen::Index batch = features.rows() / n;
  ad::Var h = gae::gcn_layer(tape, features, op_, conv1_, 0.0, config_.slope, mode, nullptr);
  h = ad::tanh(bn1_(tape, h, mode));
  h = gae::gcn_layer(tape, h, op_, conv2_, 0.0, config_.slope, mode, nullptr);
  h = ad::tanh(bn2_(tape, h, mode));
  h = fc1_(tape, ad::reshape(h, batch, n * config_.hidden2));
  h = ad::leaky_relu(bn3_(tape, h, mode), config_.slope);
  return fc2_(tape, h);
}

Matrix Discriminator::score(const Matrix& features) {
  ad::Tape tape;
  return (*this)(tape, tape.constant(features), Mode::Eval).value();
}

ad::StateRefs Discriminator::state() {
  ad::StateRefs refs;
  conv1_.collect(refs);
  bn1_.collect(refs);
  conv2_.collect(refs);
  bn2_.collect(refs);
  fc1_.collect(refs);
  bn3_.collect(refs);
  fc2_.collect(refs);
  return refs;
}

}  // namespace planelit::transfer
