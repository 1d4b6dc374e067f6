#include "planelit/gae/gae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "planelit/ad/checkpoint.hpp"

namespace planelit::gae {

void GaeConfig::validate() const {
  if (vertices < 1 || input_width < 1 || hidden1 < 1 || hidden2 < 1 || latent < 1 || output_width < 1) {
    throw std::invalid_argument("GaeConfig: all widths and the vertex count must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("GaeConfig: dropout must be in [0, 1)");
}

nlohmann::json to_json(const GaeConfig& c) {
  return {{"vertices", c.vertices}, {"input_width", c.input_width}, {"hidden1", c.hidden1},
          {"hidden2", c.hidden2},   {"latent", c.latent},           {"output_width", c.output_width},
          {"dropout", c.dropout},   {"slope", c.slope},             {"sigmoid_output", c.sigmoid_output}};
}

GaeConfig gae_config_from_json(const nlohmann::json& j) {
  GaeConfig c;
  c.vertices = j.at("vertices").get<int>();
  c.input_width = j.value("input_width", c.input_width);
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  c.latent = j.value("latent", c.latent);
  c.output_width = j.value("output_width", c.output_width);
  c.dropout = j.value("dropout", c.dropout);
  c.slope = j.value("slope", c.slope);
  c.sigmoid_output = j.value("sigmoid_output", c.sigmoid_output);
  c.validate();
  return c;
}

GcnLayer::GcnLayer(const std::string& name, Eigen::Index in, Eigen::Index out, bool act, Rng& rng)
    : weight(name + ".weight", ad::xavier_uniform(in, out, rng)),
      bias(name + ".bias", Matrix::Zero(1, out)),
      activate(act) {}

ad::Var gcn_layer(ad::Tape& tape, const ad::Var& h, const SparseMatrix& s, GcnLayer& layer, double dropout,
                  double slope, Mode mode, Rng* rng) {
  if (h.cols() != layer.weight.value.rows()) {
    throw std::invalid_argument("gcn_layer: input width " + std::to_string(h.cols()) + " does not match weight " +
                                std::to_string(layer.weight.value.rows()) + "x" +
                                std::to_string(layer.weight.value.cols()));
  }
  ad::Var x = ad::dropout(h, dropout, mode, rng);
  const ad::Var w = tape.param(layer.weight);
  // Propagate over the narrower side of the product.
  ad::Var y = w.cols() < x.cols() ? ad::sparse_graph_matmul(s, ad::matmul(x, w)) : ad::matmul(ad::sparse_graph_matmul(s, x), w);
  y = ad::add_row(y, tape.param(layer.bias));
  return layer.activate ? ad::leaky_relu(y, slope) : y;
}

Matrix assemble_features(const Matrix3X& normals, const Matrix& field) {
  if (normals.rows() != field.rows()) {
    throw std::invalid_argument("assemble_features: " + std::to_string(normals.rows()) + " normals vs " +
                                std::to_string(field.rows()) + " field rows");
  }
  Matrix f(normals.rows(), 3 + field.cols());
  f << normals, field;
  return f;
}

GaeModel::GaeModel(const GaeConfig& config, const mesh::Mesh& domain, Rng& rng)
    : GaeModel(config, mesh::build_graph_operator(domain).matrix, rng) {}

GaeModel::GaeModel(const GaeConfig& config, SparseMatrix graph_operator, Rng& rng)
    : config_(config), op_(std::move(graph_operator)) {
  config_.validate();
  if (op_.rows() != config_.vertices) {
    throw std::invalid_argument("GaeModel: config expects " + std::to_string(config_.vertices) +
                                " vertices, mesh has " + std::to_string(op_.rows()));
  }
  build(rng);
}

void GaeModel::build(Rng& rng) {
  const GaeConfig& c = config_;
  const Eigen::Index flat = static_cast<Eigen::Index>(c.vertices) * c.hidden2;
  enc1_ = GcnLayer("encoder.gcn1", c.input_width, c.hidden1, true, rng);
  enc2_ = GcnLayer("encoder.gcn2", c.hidden1, c.hidden2, true, rng);
  enc_fc_ = ad::Linear("encoder.fc", flat, c.latent, rng);
  dec_fc_ = ad::Linear("decoder.fc", c.latent, flat, rng);
  dec1_ = GcnLayer("decoder.gcn1", c.hidden2, c.hidden1, true, rng);
  dec2_ = GcnLayer("decoder.gcn2", c.hidden1, c.output_width, false, rng);
}

ad::Var GaeModel::encode(ad::Tape& tape, const ad::Var& features, Mode mode, Rng* rng) {
  const Eigen::Index n = config_.vertices;
  if (features.cols() != config_.input_width || features.rows() % n != 0 || features.rows() == 0) {
    throw std::invalid_argument("GaeModel::encode: expected (B*" + std::to_string(n) + ")x" +
                                std::to_string(config_.input_width) + " features, got " +
                                std::to_string(features.rows()) + "x" + std::to_string(features.cols()));
  }
  const Eigen::Index batch = features.rows() / n;
  ad::Var h = gcn_layer(tape, features, op_, enc1_, config_.dropout, config_.slope, mode, rng);
  h = gcn_layer(tape, h, op_, enc2_, config_.dropout, config_.slope, mode, rng);
  return enc_fc_(tape, ad::reshape(h, batch, n * config_.hidden2));
}

ad::Var GaeModel::decode(ad::Tape& tape, const ad::Var& latent, Mode mode, Rng* rng) {
  if (latent.cols() != config_.latent) {
    throw std::invalid_argument("GaeModel::decode: latent width " + std::to_string(latent.cols()) + ", expected " +
                                std::to_string(config_.latent));
  }
  const Eigen::Index n = config_.vertices;
  ad::Var h = ad::leaky_relu(dec_fc_(tape, latent), config_.slope);
  h = ad::reshape(h, latent.rows() * n, config_.hidden2);
  h = gcn_layer(tape, h, op_, dec1_, config_.dropout, config_.slope, mode, rng);
  h = gcn_layer(tape, h, op_, dec2_, config_.dropout, config_.slope, mode, rng);
  return config_.sigmoid_output ? ad::sigmoid(h) : h;
}

Matrix GaeModel::encode(const Matrix& features) {
  ad::Tape tape;
  return encode(tape, tape.constant(features), Mode::Eval, nullptr).value();
}

Matrix GaeModel::decode(const Matrix& latent) {
  ad::Tape tape;
  return decode(tape, tape.constant(latent), Mode::Eval, nullptr).value();
}

ad::StateRefs GaeModel::state() {
  ad::StateRefs refs;
  enc1_.collect(refs);
  enc2_.collect(refs);
  enc_fc_.collect(refs);
  dec_fc_.collect(refs);
  dec1_.collect(refs);
  dec2_.collect(refs);
  return refs;
}

double reconstruction_loss(const Matrix& p, const Matrix& p_hat) {
  ad::require_same_shape("reconstruction_loss", p, p_hat);
  if (p.size() == 0) throw std::invalid_argument("reconstruction_loss: empty field");
  return (p - p_hat).cwiseAbs().mean();
}

ad::Var reconstruction_loss(const ad::Var& p, const ad::Var& p_hat) {
  ad::require_same_shape("reconstruction_loss", p.value(), p_hat.value());
  return ad::mean(ad::abs(ad::sub(p, p_hat)));
}

Matrix stack_blocks(const std::vector<Matrix>& blocks, const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t count) {
  const Matrix& first = blocks[order[begin]];
  Matrix out(first.rows() * static_cast<Eigen::Index>(count), first.cols());
  for (std::size_t k = 0; k < count; ++k) {
    const Matrix& b = blocks[order[begin + k]];
    if (b.rows() != first.rows() || b.cols() != first.cols()) {
      throw std::invalid_argument("stack_blocks: sample " + std::to_string(order[begin + k]) + " has shape " +
                                  std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    out.middleRows(static_cast<Eigen::Index>(k) * first.rows(), first.rows()) = b;
  }
  return out;
}

GaeTrainResult train_gae(GaeModel& model, const std::vector<Matrix>& features, const std::vector<Matrix>& targets,
                         const GaeTrainOptions& o) {
  if (features.empty() || features.size() != targets.size()) {
    throw std::invalid_argument("train_gae: need matching non-empty feature and target sets");
  }
  if (o.epochs < 0 || o.batch < 1) throw std::invalid_argument("train_gae: epochs >= 0 and batch >= 1 required");
  auto refs = model.state();
  ad::Adam adam(refs.params, o.adam);
  Rng rng(o.seed);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(o.batch), order.size());

  GaeTrainResult result;
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      ad::Tape tape;
      const ad::Var x = tape.constant(stack_blocks(features, order, start, count));
      const ad::Var y = tape.constant(stack_blocks(targets, order, start, count));
      const ad::Var z = model.encode(tape, x, Mode::Train, &rng);
      const ad::Var loss = reconstruction_loss(y, model.decode(tape, z, Mode::Train, &rng));
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) throw std::runtime_error("train_gae: non-finite loss at epoch " + std::to_string(epoch));
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      total += value;
      ++batches;
    }
    result.loss_trace.push_back(total / static_cast<double>(batches));
    if (o.on_epoch) o.on_epoch(epoch, result.loss_trace.back());
  }
  return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  return p.replace_extension(".json");
}

void save_gae(const std::filesystem::path& path, GaeModel& model, const nlohmann::json& extra) {
  ad::save_checkpoint(path, ad::collect_entries(model.state()));
  nlohmann::json side = extra.is_object() ? extra : nlohmann::json::object();
  side["config"] = to_json(model.config());
  std::ofstream out(sidecar_path(path));
  if (!out) throw std::runtime_error("cannot write " + sidecar_path(path).string());
  out << side.dump(2) << '\n';
}

GaeModel load_gae(const std::filesystem::path& path, const mesh::Mesh& domain) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw std::runtime_error("cannot read " + sidecar_path(path).string());
  const GaeConfig config = gae_config_from_json(nlohmann::json::parse(in).at("config"));
  Rng unused(0);
  GaeModel model(config, domain, unused);
  ad::apply_entries(model.state(), ad::load_checkpoint(path));
  return model;
}

}  // namespace planelit::gae
