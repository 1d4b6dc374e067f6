#include "planelit/transfer/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "planelit/ad/checkpoint.hpp"
#include "planelit/lighting/environment.hpp"

namespace planelit::transfer {

namespace {

constexpr Eigen::Index kEncodeChunk = 64;

Matrix encode_all(gae::GaeModel& model, const Matrix3X& normals, const std::vector<Matrix>& fields) {
  const Eigen::Index n = normals.rows();
  Matrix codes(static_cast<Eigen::Index>(fields.size()), model.config().latent);
  for (Eigen::Index start = 0; start < codes.rows(); start += kEncodeChunk) {
    const Eigen::Index count = std::min(kEncodeChunk, codes.rows() - start);
    Matrix feats(count * n, 6);
    for (Eigen::Index k = 0; k < count; ++k) {
      feats.middleRows(k * n, n) = gae::assemble_features(normals, fields[static_cast<std::size_t>(start + k)]);
    }
    codes.middleRows(start, count) = model.encode(feats);
  }
  return codes;
}

Matrix repeat_rows(const Matrix& block, Eigen::Index times) { return block.replicate(times, 1); }

void require_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("train_transfer: non-finite ") + what + " at step " + std::to_string(step));
  }
}

}  // namespace

TransferData prepare_transfer_data(gae::GaeModel& plane_gae, const Matrix3X& plane_normals,
                                   const std::vector<Matrix>& plane_oi, gae::GaeModel& object_gae,
                                   const Matrix3X& object_normals, const std::vector<Matrix>& object_oi) {
  if (plane_oi.size() != object_oi.size() || plane_oi.empty()) {
    throw std::invalid_argument("prepare_transfer_data: need equally many non-zero plane and object fields");
  }
  TransferData d;
  d.source = encode_all(plane_gae, plane_normals, plane_oi);
  d.target = encode_all(object_gae, object_normals, object_oi);
  const Eigen::Index n = object_normals.rows();
  const Eigen::Index m = d.target.rows();
  d.real_fields.resize(m * n, 3);
  d.shading.resize(m * n, 1);
  for (Eigen::Index start = 0; start < m; start += kEncodeChunk) {
    const Eigen::Index count = std::min(kEncodeChunk, m - start);
    d.real_fields.middleRows(start * n, count * n) = object_gae.decode(d.target.middleRows(start, count));
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    d.shading.middleRows(k * n, n) = lighting::reflected_radiance(object_oi[static_cast<std::size_t>(k)], object_normals);
  }
  return d;
}

TransferTrainer::TransferTrainer(Generator& gen, Discriminator& disc, gae::GaeModel& object_gae,
                                 const mesh::Mesh& object, const TransferData& data, const TransferOptions& options)
    : gen_(gen),
      disc_(disc),
      object_gae_(object_gae),
      data_(data),
      options_(options),
      normals_(object.normals()),
      neighbor_mean_(mesh::neighbor_mean_operator(object)),
      gen_opt_(gen.state().params, options.generator_adam),
      disc_opt_(disc.state().params, options.discriminator_adam),
      rng_(options.seed) {
  options_.weights.validate();
  if (options_.unroll_k < 0) throw std::invalid_argument("TransferTrainer: unroll_k must be >= 0");
  if (options_.batch < 2) throw std::invalid_argument("TransferTrainer: batch must be >= 2 for batch norm");
  if (object_gae.config().vertices != object.size() || data.real_fields.rows() != data.size() * object.size()) {
    throw std::invalid_argument("TransferTrainer: data, object GAE and mesh disagree on the vertex count");
  }
  for (ad::Parameter* p : object_gae_.state().params) p->frozen = true;
}

double TransferTrainer::discriminator_step(const Matrix& real_features, const Matrix& fake_features) {
  ad::Tape tape;
  const ad::Var d_real = disc_(tape, tape.constant(real_features), Mode::Train);
  const ad::Var d_fake = disc_(tape, tape.constant(fake_features), Mode::Train);
  const ad::Var loss = lsgan_discriminator_loss(d_real, d_fake, options_.literal_fake_term);
  const double value = loss.value()(0, 0);
  require_finite(value, "discriminator loss", steps_);
  disc_opt_.zero_grad();
  tape.backward(loss);
  disc_opt_.step();
  return value;
}

StepStats TransferTrainer::step(const std::vector<std::size_t>& batch) {
  if (batch.size() < 2) throw std::invalid_argument("TransferTrainer::step: batch must hold at least two samples");
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index n = normals_.rows();
  Matrix x(b, data_.source.cols()), y(b, data_.target.cols()), real(b * n, 3), c(b * n, 1);
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto i = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(k)]);
    if (i >= data_.size()) throw std::out_of_range("TransferTrainer::step: sample index out of range");
    x.row(k) = data_.source.row(i);
    y.row(k) = data_.target.row(i);
    real.middleRows(k * n, n) = data_.real_fields.middleRows(i * n, n);
    c.middleRows(k * n, n) = data_.shading.middleRows(i * n, n);
  }
  const Matrix normals = repeat_rows(normals_, b);
  Matrix real_features(b * n, 6), fake_features(b * n, 6);
  real_features << normals, real;

  ad::Tape tape;
  const ad::Var z = gen_(tape, tape.constant(x), Mode::Train);
  const ad::Var fake = object_gae_.decode(tape, z, Mode::Eval, nullptr);
  fake_features << normals, fake.value();

  const bool unroll = options_.unroll_k > 0;
  ad::StateSnapshot saved;
  ad::Adam::State saved_opt;
  if (unroll) {
    saved = ad::snapshot(disc_.state());
    saved_opt = disc_opt_.state();
    for (int i = 0; i < options_.unroll_k; ++i) discriminator_step(real_features, fake_features);
  }

  StepStats s;
  const ad::Var d_fake = disc_(tape, ad::hcat(tape.constant(normals), fake), Mode::Train);
  const ad::Var lsgan = lsgan_generator_loss(d_fake);
  const ad::Var pair = pair_loss(tape.constant(y), z);
  const ad::Var shading = shading_loss(fake, normals, c);
  const ad::Var smooth = smooth_loss(fake, neighbor_mean_);
  s.lsgan_g = lsgan.value()(0, 0);
  s.pair = pair.value()(0, 0);
  s.shading = shading.value()(0, 0);
  s.smooth = smooth.value()(0, 0);
  for (const auto& [v, what] : {std::pair{s.lsgan_g, "lsgan"}, {s.pair, "pair"}, {s.shading, "shading"},
                                {s.smooth, "smooth"}}) {
    require_finite(v, what, steps_);
  }
  const ad::Var total = total_loss(lsgan, pair, shading, smooth, options_.weights);
  s.loss_g = total.value()(0, 0);
  gen_opt_.zero_grad();
  tape.backward(total);
  gen_opt_.step();

  if (unroll) {
    ad::restore(disc_.state(), saved);
    disc_opt_.set_state(std::move(saved_opt));
  }
  s.loss_d = discriminator_step(real_features, fake_features);
  ++steps_;
  return s;
}

EpochStats TransferTrainer::run_epoch(int epoch) {
  std::vector<std::size_t> order(static_cast<std::size_t>(data_.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t batch = static_cast<std::size_t>(options_.batch);
  EpochStats e;
  e.epoch = epoch;
  std::size_t count = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t len = std::min(batch, order.size() - start);
    if (len < 2) break;
    const StepStats s = step(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                      order.begin() + static_cast<std::ptrdiff_t>(start + len)));
    e.mean.loss_d += s.loss_d;
    e.mean.loss_g += s.loss_g;
    e.mean.lsgan_g += s.lsgan_g;
    e.mean.pair += s.pair;
    e.mean.shading += s.shading;
    e.mean.smooth += s.smooth;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("TransferTrainer: dataset too small for one batch");
  const double inv = 1.0 / static_cast<double>(count);
  for (double* v : {&e.mean.loss_d, &e.mean.loss_g, &e.mean.lsgan_g, &e.mean.pair, &e.mean.shading, &e.mean.smooth}) {
    *v *= inv;
  }
  return e;
}

std::vector<EpochStats> train_transfer(Generator& gen, Discriminator& disc, gae::GaeModel& object_gae,
                                       const mesh::Mesh& object, const TransferData& data,
                                       const TransferOptions& options,
                                       const std::function<void(const EpochStats&)>& on_epoch) {
  TransferTrainer trainer(gen, disc, object_gae, object, data, options);
  std::vector<EpochStats> log;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    log.push_back(trainer.run_epoch(epoch));
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

void write_transfer_log(const std::filesystem::path& path, const std::vector<EpochStats>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "epoch,loss_D,loss_G,pair,shading,smooth\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.mean.loss_d << ',' << e.mean.loss_g << ',' << e.mean.pair << ',' << e.mean.shading
        << ',' << e.mean.smooth << '\n';
  }
}

void save_transfer(const std::filesystem::path& path, Generator& gen, Discriminator& disc,
                   const nlohmann::json& extra) {
  ad::StateRefs refs = gen.state();
  refs.append(disc.state());
  ad::save_checkpoint(path, ad::collect_entries(refs));
  nlohmann::json side = extra.is_object() ? extra : nlohmann::json::object();
  side["generator"] = {{"width", gen.width()}};
  side["discriminator"] = to_json(disc.config());
  std::ofstream out(gae::sidecar_path(path));
  if (!out) throw std::runtime_error("cannot write " + gae::sidecar_path(path).string());
  out << side.dump(2) << '\n';
}

Generator load_generator(const std::filesystem::path& path) {
  std::ifstream in(gae::sidecar_path(path));
  if (!in) throw std::runtime_error("cannot read " + gae::sidecar_path(path).string());
  const int width = nlohmann::json::parse(in).at("generator").at("width").get<int>();
  Rng unused(0);
  Generator gen(width, unused);
  const auto entries = ad::load_checkpoint(path);
  ad::apply_entries(gen.state(), entries);
  return gen;
}

Matrix predict_object_oi(gae::GaeModel& plane_gae, const Matrix3X& plane_normals, const Matrix& plane_oi,
                         Generator& gen, gae::GaeModel& object_gae) {
  const Matrix z = plane_gae.encode(gae::assemble_features(plane_normals, plane_oi));
  return object_gae.decode(gen.generate(z));
}

}  // namespace planelit::transfer
