#include "planelit/transfer/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace planelit::transfer {

void LossWeights::validate() const {
  if (!(pair >= 0.0) || !(shading >= 0.0) || !(smooth >= 0.0)) {
    throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
  }
}

namespace {

void require_scores(const char* op, const Matrix& s) {
  if (s.cols() != 1 || s.rows() == 0) {
    throw std::invalid_argument(std::string(op) + ": scores must be B x 1, got " + std::to_string(s.rows()) + "x" +
                                std::to_string(s.cols()));
  }
}

}  // namespace

LsganLosses lsgan_loss(const Matrix& d_real, const Matrix& d_fake, bool literal_fake_term) {
  require_scores("lsgan_loss", d_real);
  require_scores("lsgan_loss", d_fake);
  const double real_term = (d_real.array() - 1.0).square().mean();
  const double fake_term = literal_fake_term ? (1.0 - d_fake.array()).square().mean() : d_fake.array().square().mean();
  return {real_term + fake_term, (d_fake.array() - 1.0).square().mean()};
}

ad::Var lsgan_discriminator_loss(const ad::Var& d_real, const ad::Var& d_fake, bool literal_fake_term) {
  require_scores("lsgan_discriminator_loss", d_real.value());
  require_scores("lsgan_discriminator_loss", d_fake.value());
  const ad::Var real_term = ad::mean(ad::square(ad::add_scalar(d_real, -1.0)));
  const ad::Var fake_term = literal_fake_term ? ad::mean(ad::square(ad::add_scalar(ad::scale(d_fake, -1.0), 1.0)))
                                              : ad::mean(ad::square(d_fake));
  return ad::add(real_term, fake_term);
}

ad::Var lsgan_generator_loss(const ad::Var& d_fake) {
  require_scores("lsgan_generator_loss", d_fake.value());
  return ad::mean(ad::square(ad::add_scalar(d_fake, -1.0)));
}

double pair_loss(const Matrix& y, const Matrix& g) {
  ad::require_same_shape("pair_loss", y, g);
  return (y - g).cwiseAbs().mean();
}

ad::Var pair_loss(const ad::Var& y, const ad::Var& g) {
  ad::require_same_shape("pair_loss", y.value(), g.value());
  return ad::mean(ad::abs(ad::sub(y, g)));
}

double shading_loss(const Matrix& oi, const Matrix& normals, const Matrix& c) {
  ad::require_same_shape("shading_loss", oi, normals);
  if (oi.cols() != 3 || c.rows() != oi.rows() || c.cols() != 1) {
    throw std::invalid_argument("shading_loss: expected N x 3 fields and an N x 1 target");
  }
  return (oi.cwiseProduct(normals).rowwise().sum() - c).squaredNorm() / static_cast<double>(oi.rows());
}

ad::Var shading_loss(const ad::Var& oi, const Matrix& normals, const Matrix& c) {
  ad::require_same_shape("shading_loss", oi.value(), normals);
  if (oi.cols() != 3 || c.rows() != oi.rows() || c.cols() != 1) {
    throw std::invalid_argument("shading_loss: expected N x 3 fields and an N x 1 target");
  }
  const ad::Var residual = ad::sub(ad::rowwise_dot(oi, normals), oi.tape()->constant(c));
  return ad::mean(ad::square(residual));
}

double smooth_loss(const Matrix& field, const SparseMatrix& neighbor_mean) {
  const Eigen::Index n = neighbor_mean.rows();
  if (n == 0 || field.rows() % n != 0) throw std::invalid_argument("smooth_loss: field does not match mesh");
  double total = 0.0;
  for (Eigen::Index b = 0; b < field.rows() / n; ++b) {
    const auto block = field.middleRows(b * n, n);
    total += (neighbor_mean * block - block).cwiseAbs().sum();
  }
  return total / static_cast<double>(field.size());
}

ad::Var smooth_loss(const ad::Var& field, const SparseMatrix& neighbor_mean) {
  return ad::mean(ad::abs(ad::sub(ad::sparse_graph_matmul(neighbor_mean, field), field)));
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> parts[] = {
      {"lsgan", c.lsgan}, {"pair", c.pair}, {"shading", c.shading}, {"smooth", c.smooth}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw std::domain_error(std::string("total_loss: non-finite ") + name + " component");
  }
  return c.lsgan + w.pair * c.pair + w.shading * c.shading + w.smooth * c.smooth;
}

ad::Var total_loss(const ad::Var& lsgan, const ad::Var& pair, const ad::Var& shading, const ad::Var& smooth,
                   const LossWeights& w) {
  total_loss(LossComponents{lsgan.value()(0, 0), pair.value()(0, 0), shading.value()(0, 0), smooth.value()(0, 0)}, w);
  ad::Var t = ad::add(lsgan, ad::scale(pair, w.pair));
  t = ad::add(t, ad::scale(shading, w.shading));
  return ad::add(t, ad::scale(smooth, w.smooth));
}

}  // namespace planelit::transfer
