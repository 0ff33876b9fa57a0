#include "ddtcdr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddtcdr/error.hpp"

namespace ddtcdr {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string Matrix::shape() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape() + " and " +
                     b.shape());
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  if (!all_finite(c.data())) {
    throw NumericError("matmul: non-finite result for " + a.shape() + " x " + b.shape());
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: matrix " + a.shape() + " vs vector of length " +
                     std::to_string(x.size()));
  }
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) {
    throw ShapeError("matvec_t: matrix " + a.shape() + " vs vector of length " +
                     std::to_string(x.size()));
  }
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    auto arow = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += arow[j] * xi;
  }
  return y;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "subtract", a, b);
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_sq(const Matrix& a) { return dot(a.data(), a.data()); }

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_sq(a)); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

// Derivative expressed through pre-activation and output.
double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::sigmoid: return out * (1.0 - out);
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

}  // namespace

DenseLayer::DenseLayer(Matrix w, Vector b, Activation act)
    : weights(std::move(w)), bias(std::move(b)), activation(act) {
  if (bias.size() != weights.rows()) {
    throw ShapeError("dense layer: bias length " + std::to_string(bias.size()) +
                     " does not match weights " + weights.shape());
  }
}

DenseLayer DenseLayer::xavier(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return DenseLayer(std::move(w), Vector(out, 0.0), act);
}

LayerForward layer_forward(const DenseLayer& layer, std::span<const double> x) {
  if (x.size() != layer.in()) {
    throw ShapeError("layer_forward: input length " + std::to_string(x.size()) +
                     " vs weights " + layer.weights.shape());
  }
  LayerForward f;
  f.cache.input.assign(x.begin(), x.end());
  f.cache.pre = matvec(layer.weights, x);
  for (std::size_t i = 0; i < f.cache.pre.size(); ++i) f.cache.pre[i] += layer.bias[i];
  f.y.resize(f.cache.pre.size());
  for (std::size_t i = 0; i < f.y.size(); ++i) f.y[i] = activate(layer.activation, f.cache.pre[i]);
  f.cache.output = f.y;
  return f;
}

LayerGrad layer_backward(const DenseLayer& layer, const LayerCache& cache,
                         std::span<const double> dy) {
  if (dy.size() != layer.out() || cache.input.size() != layer.in() ||
      cache.pre.size() != layer.out()) {
    throw ShapeError("layer_backward: gradient length " + std::to_string(dy.size()) +
                     " / cache does not match weights " + layer.weights.shape());
  }
  LayerGrad g;
  g.db.resize(layer.out());
  for (std::size_t i = 0; i < layer.out(); ++i) {
    g.db[i] = dy[i] * activate_grad(layer.activation, cache.pre[i], cache.output[i]);
  }
  g.dW = Matrix(layer.out(), layer.in());
  for (std::size_t i = 0; i < layer.out(); ++i) {
    const double d = g.db[i];
    if (d == 0.0) continue;
    auto row = g.dW.row(i);
    for (std::size_t j = 0; j < layer.in(); ++j) row[j] = d * cache.input[j];
  }
  g.dx = matvec_t(layer.weights, g.db);
  return g;
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (!all_finite(grads)) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void sgd_step(Matrix& params, const Matrix& grads, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw ShapeError("sgd_step: parameter " + params.shape() + " vs gradient " + grads.shape());
  }
  sgd_step(params.data(), grads.data(), lr);
}

void sgd_step(DenseLayer& layer, const LayerGrad& grad, double lr) {
  sgd_step(layer.weights, grad.dW, lr);
  sgd_step(layer.bias, grad.db, lr);
}

void accumulate(LayerGrad& acc, const LayerGrad& g) {
  auto a = acc.dW.data();
  auto b = g.dW.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  for (std::size_t i = 0; i < acc.db.size(); ++i) acc.db[i] += g.db[i];
}

LayerGrad zero_grad(const DenseLayer& layer) {
  return LayerGrad{Vector(layer.in(), 0.0), Matrix(layer.out(), layer.in()),
                   Vector(layer.out(), 0.0)};
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<double()>& loss, std::span<const ParamRef> params,
                  double step, double floor) {
  double worst = 0.0;
  for (const ParamRef& p : params) {
    if (p.value.size() != p.grad.size()) {
      throw ShapeError("grad_check: parameter block of " + std::to_string(p.value.size()) +
                       " entries vs gradient of " + std::to_string(p.grad.size()));
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = loss();
      p.value[i] = saved - step;
      const double down = loss();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ddtcdr
