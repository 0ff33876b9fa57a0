#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ddtcdr/rng.hpp"

namespace ddtcdr {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Matrix transpose() const;
  std::string shape() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_t(const Matrix& a, std::span<const double> x);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_sq(const Matrix& a);
double frobenius_norm(const Matrix& a);
bool all_finite(std::span<const double> v);

// ---------------------------------------------------------------------------
// Fully connected layer with manual forward/backward.

enum class Activation { identity, sigmoid, relu };

const char* to_string(Activation a);
double sigmoid(double x);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(Matrix w, Vector b, Activation act);

  // Xavier-uniform weights, zero bias.
  static DenseLayer xavier(std::size_t in, std::size_t out, Activation act, Rng& rng);

  std::size_t in() const noexcept { return weights.cols(); }
  std::size_t out() const noexcept { return weights.rows(); }
  std::size_t param_count() const noexcept { return weights.size() + bias.size(); }

  bool operator==(const DenseLayer&) const = default;
};

struct LayerCache {
  Vector input;
  Vector pre;
  Vector output;
};

struct LayerForward {
  Vector y;
  LayerCache cache;
};

struct LayerGrad {
  Vector dx;
  Matrix dW;
  Vector db;
};

LayerForward layer_forward(const DenseLayer& layer, std::span<const double> x);
LayerGrad layer_backward(const DenseLayer& layer, const LayerCache& cache,
                         std::span<const double> dy);

// p <- p - lr * g. Throws NumericError on a non-finite gradient.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);
void sgd_step(Matrix& params, const Matrix& grads, double lr);
void sgd_step(DenseLayer& layer, const LayerGrad& grad, double lr);

// Accumulates b into a (same shapes).
void accumulate(LayerGrad& acc, const LayerGrad& g);
LayerGrad zero_grad(const DenseLayer& layer);

// ---------------------------------------------------------------------------
// Gradient checking.

struct ParamRef {
  std::span<double> value;
  std::span<const double> grad;
};

// Largest relative error |a - n| / max(|a|, |n|, floor) between analytic
// gradients and central differences of `loss` over every parameter entry.
// Parameters are perturbed in place and restored.
double grad_check(const std::function<double()>& loss, std::span<const ParamRef> params,
                  double step = 1e-5, double floor = 1e-6);

}  // namespace ddtcdr
