#include "ddtcdr/mapping.hpp"

#include <algorithm>
#include <cmath>

#include "ddtcdr/error.hpp"
#include "ddtcdr/rng.hpp"

namespace ddtcdr {

namespace {

Matrix gram_minus_identity(const Matrix& x) {
  Matrix g = matmul_tn(x, x);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return g;
}

void require_square(const Matrix& x, const char* op) {
  if (x.rows() != x.cols() || x.rows() == 0) {
    throw ShapeError(std::string(op) + ": mapping must be square and non-empty, got " + x.shape());
  }
}

// Upper bound on the spectral norm: sqrt(||X||_1 ||X||_inf).
double spectral_bound(const Matrix& x) {
  double max_col = 0.0, max_row = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += std::abs(v);
    max_row = std::max(max_row, s);
  }
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += std::abs(x(r, c));
    max_col = std::max(max_col, s);
  }
  return std::sqrt(max_col * max_row);
}

}  // namespace

double OrthogonalMap::orthogonality_error() const {
  return frobenius_norm(gram_minus_identity(x));
}

OrthogonalMap init_map(std::size_t d, std::uint64_t seed) {
  if (d < 1) throw ShapeError("init_map: dimension must be >= 1");
  Rng rng(seed);
  // A Gaussian draw is singular or badly conditioned with negligible
  // probability; redraw in that case.
  for (int attempt = 0;; ++attempt) {
    OrthogonalMap m;
    m.x = Matrix(d, d);
    for (double& v : m.x.data()) v = rng.normal();
    try {
      return project_orthogonal(m, {1e-12, 100});
    } catch (const ConvergenceError&) {
      if (attempt >= 16) throw;
    }
  }
}

Vector map_forward(const OrthogonalMap& m, std::span<const double> e) {
  if (e.size() != m.dim()) {
    throw ShapeError("map_forward: embedding length " + std::to_string(e.size()) +
                     " vs mapping " + m.x.shape());
  }
  return matvec(m.x, e);
}

Vector map_inverse(const OrthogonalMap& m, std::span<const double> e) {
  if (e.size() != m.dim()) {
    throw ShapeError("map_inverse: embedding length " + std::to_string(e.size()) +
                     " vs mapping " + m.x.shape());
  }
  return matvec_t(m.x, e);
}

PenaltyResult ortho_penalty(const OrthogonalMap& m) {
  require_square(m.x, "ortho_penalty");
  const Matrix g = gram_minus_identity(m.x);
  return {frobenius_sq(g), 4.0 * matmul(m.x, g)};
}

OrthogonalMap project_orthogonal(const OrthogonalMap& m, const ProjectionOptions& opt) {
  require_square(m.x, "project_orthogonal");
  if (!all_finite(m.x.data())) throw NumericError("project_orthogonal: non-finite mapping");
  OrthogonalMap out = m;
  double err = out.orthogonality_error();
  if (err <= opt.tol) return out;

  const double bound = spectral_bound(out.x);
  if (bound == 0.0) throw ConvergenceError("project_orthogonal: zero mapping; re-initialize X");
  // The iteration converges for singular values in (0, sqrt(3)).
  if (bound >= std::sqrt(3.0)) out.x = (1.0 / bound) * out.x;

  const std::size_t d = out.dim();
  for (int it = 0; it < opt.max_iters; ++it) {
    Matrix step = -1.0 * matmul_tn(out.x, out.x);
    for (std::size_t i = 0; i < d; ++i) step(i, i) += 3.0;
    out.x = 0.5 * matmul(out.x, step);
    err = out.orthogonality_error();
    if (!std::isfinite(err)) break;
    if (err <= opt.tol) return out;
  }
  throw ConvergenceError("project_orthogonal: no convergence within " +
                         std::to_string(opt.max_iters) +
                         " iterations (||X^T X - I||_F = " + std::to_string(err) +
                         "); X is near-singular, re-initialize the mapping");
}

}  // namespace ddtcdr
