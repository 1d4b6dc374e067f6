#include "planelit/ad/ops.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace planelit::ad {
namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("ad: operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("ad: operands recorded on different tapes");
  return t;
}

// Elementwise map whose derivative is expressed in terms of input x and output y.
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y = a.value().unaryExpr(f);
  return t.record(std::move(y), {ia}, [ia, df](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ia)) return;
    const Matrix& x = tp.value(ia);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d.data()[i] = df(x.data()[i]) * g.data()[i];
    tp.accumulate(ia, d);
  });
}

}  // namespace

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  Matrix y = a.value() * b.value();
  return t.record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var dense_affine(const Var& input, const Var& weight, const Var& bias) {
  Tape& t = tape_of(input, weight);
  tape_of(input, bias);
  const Matrix& x = input.value();
  const Matrix& w = weight.value();
  const Matrix& b = bias.value();
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("dense_affine: shape mismatch input " + shape_str(x) + ", weight " + shape_str(w) +
                                ", bias " + shape_str(b));
  }
  const int ix = input.id(), iw = weight.id(), ib = bias.id();
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return t.record(std::move(y), {ix, iw, ib}, [ix, iw, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ix)) tp.accumulate(ix, g * tp.value(iw).transpose());
    if (tp.requires_grad(iw)) tp.accumulate(iw, tp.value(ix).transpose() * g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var add_row(const Var& a, const Var& bias) {
  Tape& t = tape_of(a, bias);
  const Matrix& b = bias.value();
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw std::invalid_argument("add_row: shape mismatch input " + shape_str(a.value()) + ", bias " + shape_str(b));
  }
  const int ia = a.id(), ib = bias.id();
  Matrix y = a.value();
  y.rowwise() += b.row(0);
  return t.record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var sparse_graph_matmul(const SparseMatrix& op, const Var& features) {
  Tape& t = tape_of(features);
  const Matrix& x = features.value();
  const Eigen::Index n = op.cols();
  if (op.rows() != n || n == 0 || x.rows() % n != 0) {
    throw std::invalid_argument("sparse_graph_matmul: operator " + std::to_string(op.rows()) + "x" +
                                std::to_string(op.cols()) + " incompatible with features " + shape_str(x));
  }
  const Eigen::Index blocks = x.rows() / n;
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) y.middleRows(b * n, n).noalias() = op * x.middleRows(b * n, n);
  const SparseMatrix* s = &op;
  const int ix = features.id();
  return t.record(std::move(y), {ix}, [s, ix, n, blocks](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ix)) return;
    Matrix d(g.rows(), g.cols());
    for (Eigen::Index b = 0; b < blocks; ++b) d.middleRows(b * n, n).noalias() = s->transpose() * g.middleRows(b * n, n);
    tp.accumulate(ix, d);
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("mul", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value() * s, {ia}, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y = a.value().array() + s;
  return t.record(std::move(y), {ia}, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Var leaky_relu(const Var& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * x; },
      [alpha](double x) { return x > 0.0 ? 1.0 : alpha; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

Var sigmoid(const Var& a) {
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return unary(a, sig, [sig](double x) {
    const double s = sig(x);
    return s * (1.0 - s);
  });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(std::move(y), {ia}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (rows * cols != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x) + " as " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  const int ia = a.id();
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  Matrix y = Eigen::Map<const Matrix>(x.data(), rows, cols);
  return t.record(std::move(y), {ia}, [ia, r0, c0](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var hcat(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("hcat: row mismatch " + shape_str(a.value()) + " | " + shape_str(b.value()));
  }
  Matrix y(a.rows(), a.cols() + b.cols());
  y << a.value(), b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return t.record(std::move(y), {ia, ib}, [ia, ib, ca, cb](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.leftCols(ca));
    tp.accumulate(ib, g.rightCols(cb));
  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds for " + shape_str(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(a.value().middleRows(begin, count), {ia}, [ia, r, c, begin, count](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleRows(begin, count) = g;
    tp.accumulate(ia, d);
  });
}

Var rowwise_dot(const Var& a, const Matrix& other) {
  Tape& t = tape_of(a);
  require_same_shape("rowwise_dot", a.value(), other);
  const int ia = a.id();
  Matrix y = a.value().cwiseProduct(other).rowwise().sum();
  return t.record(std::move(y), {ia}, [ia, other](Tape& tp, const Matrix& g) {
    Matrix d = other.array().colwise() * g.col(0).array();
    tp.accumulate(ia, d);
  });
}

Var replicate_cols(const Var& a, Eigen::Index k) {
  Tape& t = tape_of(a);
  if (a.cols() != 1) throw std::invalid_argument("replicate_cols: expected one column, got " + shape_str(a.value()));
  const int ia = a.id();
  Matrix y = a.value().replicate(1, k);
  return t.record(std::move(y), {ia}, [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.rowwise().sum()); });
}

Var detach(const Var& a) { return tape_of(a).constant(a.value()); }

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode) {
  Tape& t = tape_of(input, gamma);
  tape_of(input, beta);
  const Matrix& x = input.value();
  const Eigen::Index batch = x.rows(), width = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != width || beta.rows() != 1 || beta.cols() != width) {
    throw std::invalid_argument("batch_norm: scale/shift must be 1x" + std::to_string(width));
  }
  if (state.running_mean.size() == 0) {
    state.running_mean = Matrix::Zero(1, width);
    state.running_var = Matrix::Ones(1, width);
  }
  if (mode == Mode::Train && batch < 2) {
    throw std::invalid_argument("batch_norm: train mode needs at least 2 rows, got " + std::to_string(batch));
  }

  Matrix mu, var;
  if (mode == Mode::Train) {
    mu = x.colwise().mean();
    var = (x.rowwise() - mu.row(0)).array().square().colwise().mean();
    const double m = state.momentum;
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    state.running_mean = (1.0 - m) * state.running_mean + m * mu;
    state.running_var = (1.0 - m) * state.running_var + (m * unbias) * var;
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }
  Matrix inv_std = (var.array() + state.eps).rsqrt();
  Matrix xhat = (x.rowwise() - mu.row(0)).array().rowwise() * inv_std.row(0).array();
  Matrix y = xhat.array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);

  const int ix = input.id(), ig = gamma.id(), ib = beta.id();
  const bool train = mode == Mode::Train;
  return t.record(std::move(y), {ix, ig, ib},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), train](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                    if (!tp.requires_grad(ix)) return;
                    Matrix dxhat = g.array().rowwise() * tp.value(ig).row(0).array();
                    if (!train) {
                      tp.accumulate(ix, Matrix(dxhat.array().rowwise() * inv_std.row(0).array()));
                      return;
                    }
                    const double b = static_cast<double>(dxhat.rows());
                    Eigen::RowVectorXd s1 = dxhat.colwise().sum();
                    Eigen::RowVectorXd s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                    Matrix dx = (b * dxhat.array()).rowwise() - s1.array();
                    dx.array() -= xhat.array().rowwise() * s2.array();
                    dx.array().rowwise() *= (inv_std.row(0).array() / b);
                    tp.accumulate(ix, dx);
                  });
}

Var dropout(const Var& input, double rate, Mode mode, Rng* rng) {
  Tape& t = tape_of(input);
  if (!(rate >= 0.0) || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return input;
  if (rng == nullptr) throw std::invalid_argument("dropout: train mode requires an rng");
  const Matrix& x = input.value();
  Matrix mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  // Each 64-bit draw yields two 32-bit uniforms compared against rate * 2^32.
  const auto threshold = static_cast<std::uint64_t>(std::ceil(rate * 4294967296.0));
  std::uint64_t bits = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (i % 2 == 0) bits = (*rng)();
    const std::uint64_t u = (i % 2 == 0) ? (bits & 0xffffffffu) : (bits >> 32);
    mask.data()[i] = u < threshold ? 0.0 : keep_scale;
  }
  Matrix y = x.cwiseProduct(mask);
  const int ix = input.id();
  return t.record(std::move(y), {ix}, [ix, mask = std::move(mask)](Tape& tp, const Matrix& g) {
    tp.accumulate(ix, g.cwiseProduct(mask));
  });
}

}  // namespace planelit::ad
