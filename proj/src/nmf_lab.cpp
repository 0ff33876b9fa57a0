#include "ddtcdr/nmf_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddtcdr/error.hpp"
#include "ddtcdr/rng.hpp"

namespace ddtcdr::nmf {

namespace {

Matrix product(const Matrix& w, const Matrix& h) { return matmul(w, h); }

bool nonnegative(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return v >= 0.0; });
}

// (1 - a) P - a Q, where Q is already mixed through X or X^T.
Matrix mix(double alpha, const Matrix& own, const Matrix& mixed) {
  return (1.0 - alpha) * own - alpha * mixed;
}

}  // namespace

void DualNmfProblem::validate() const {
  if (v_a.empty() || v_a.rows() != v_b.rows() || v_a.cols() != v_b.cols()) {
    throw ShapeError("dual NMF: V_A " + v_a.shape() + " and V_B " + v_b.shape() +
                     " must be non-empty and equal in shape");
  }
  if (x.rows() != v_a.rows() || x.cols() != v_a.rows()) {
    throw ShapeError("dual NMF: X is " + x.shape() + ", expected " +
                     std::to_string(v_a.rows()) + "x" + std::to_string(v_a.rows()));
  }
  if (!(alpha >= 0.0 && alpha < 0.5)) {
    throw ConfigError("dual NMF: alpha " + std::to_string(alpha) + " outside [0, 0.5)");
  }
  if (rank < 1) throw ConfigError("dual NMF: rank must be >= 1");
  if (!nonnegative(v_a) || !nonnegative(v_b)) throw DataError("dual NMF: V_A and V_B must be >= 0");
}

double dual_loss(const DualNmfProblem& p, const DualNmfState& s) {
  const Matrix pa = product(s.w_a, s.h_a);
  const Matrix pb = product(s.w_b, s.h_b);
  if (pa.rows() != p.v_a.rows() || pa.cols() != p.v_a.cols() || pb.rows() != p.v_b.rows() ||
      pb.cols() != p.v_b.cols()) {
    throw ShapeError("dual NMF loss: products " + pa.shape() + ", " + pb.shape() + " vs V " +
                     p.v_a.shape());
  }
  const double a = p.alpha;
  const Matrix ea = p.v_a - (1.0 - a) * pa - a * matmul(p.x, pb);
  const Matrix eb = p.v_b - (1.0 - a) * pb - a * matmul_tn(p.x, pa);
  return frobenius_sq(ea) + frobenius_sq(eb);
}

Reduced reduce(const DualNmfProblem& p) {
  if (p.alpha == 0.5) {
    throw ConfigError("reduce: alpha = 0.5 makes the elimination singular (1 - 2 alpha = 0)");
  }
  const double scale = 1.0 / (1.0 - 2.0 * p.alpha);
  return {scale * mix(p.alpha, p.v_a, matmul(p.x, p.v_b)),
          scale * mix(p.alpha, p.v_b, matmul_tn(p.x, p.v_a))};
}

std::pair<Matrix, Matrix> recompose(const DualNmfProblem& p, const Reduced& r) {
  const double a = p.alpha;
  return {(1.0 - a) * r.m_a + a * matmul(p.x, r.m_b),
          (1.0 - a) * r.m_b + a * matmul_tn(p.x, r.m_a)};
}

double reduced_loss(const Reduced& r, const DualNmfState& s) {
  return frobenius_sq(r.m_a - product(s.w_a, s.h_a)) + frobenius_sq(r.m_b - product(s.w_b, s.h_b));
}

double eliminated_loss(const DualNmfProblem& p, const DualNmfState& s) {
  const Matrix pa = product(s.w_a, s.h_a);
  const Matrix pb = product(s.w_b, s.h_b);
  const double a = p.alpha;
  const Matrix ea = p.v_a - (1.0 - a) * pa - a * matmul(p.x, pb);
  const Matrix eb = p.v_b - (1.0 - a) * pb - a * matmul_tn(p.x, pa);
  return frobenius_sq(mix(a, ea, matmul(p.x, eb))) + frobenius_sq(mix(a, eb, matmul_tn(p.x, ea)));
}

std::string Conditions::failing() const {
  std::string out;
  auto add = [&out](bool ok, const char* name) {
    if (ok) return;
    if (!out.empty()) out += ", ";
    out += name;
  };
  add(a, "(a) 2*alpha - 1 < 0");
  add(b, "(b) (1 - alpha) V_B - alpha X^T V_A >= 0");
  add(c, "(c) (1 - alpha) V_A - alpha X V_B >= 0");
  return out;
}

Conditions check_conditions(const DualNmfProblem& p) {
  Conditions out;
  out.a = 2.0 * p.alpha - 1.0 < 0.0;
  out.b = nonnegative(mix(p.alpha, p.v_b, matmul_tn(p.x, p.v_a)));
  out.c = nonnegative(mix(p.alpha, p.v_a, matmul(p.x, p.v_b)));
  return out;
}

Matrix perturb(const Matrix& v, std::size_t m, double k) {
  Matrix out = v;
  const double shift = static_cast<double>(m) * k;
  for (double& e : out.data()) e += shift;
  return out;
}

std::size_t matrix_rank(const Matrix& a, double tol) {
  Matrix m = a;
  std::size_t rank = 0;
  const std::size_t rows = m.rows(), cols = m.cols();
  double scale = 0.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0;
  for (std::size_t c = 0; c < cols && rank < rows; ++c) {
    std::size_t pivot = rank;
    for (std::size_t r = rank + 1; r < rows; ++r) {
      if (std::abs(m(r, c)) > std::abs(m(pivot, c))) pivot = r;
    }
    if (std::abs(m(pivot, c)) <= tol * scale) continue;
    if (pivot != rank) {
      for (std::size_t j = 0; j < cols; ++j) std::swap(m(pivot, j), m(rank, j));
    }
    for (std::size_t r = rank + 1; r < rows; ++r) {
      const double f = m(r, c) / m(rank, c);
      for (std::size_t j = c; j < cols; ++j) m(r, j) -= f * m(rank, j);
    }
    ++rank;
  }
  return rank;
}

DualNmfProblem perturb_problem(const DualNmfProblem& p, double k) {
  if (!(k > 0.0)) throw ConfigError("perturb: rating scale k must be > 0");
  DualNmfProblem out = p;
  const std::size_t m = matrix_rank(p.x);
  out.v_a = perturb(p.v_a, m, k);
  out.v_b = perturb(p.v_b, m, k);
  return out;
}

DualNmfState init_state(const DualNmfProblem& p, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&rng](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(0.1, 1.1);
    return m;
  };
  DualNmfState s;
  const std::size_t rows = p.v_a.rows(), cols = p.v_a.cols();
  s.w_a = draw(rows, p.rank);
  s.h_a = draw(p.rank, cols);
  s.w_b = draw(rows, p.rank);
  s.h_b = draw(p.rank, cols);
  return s;
}

void lee_seung_step(const Matrix& v, Matrix& w, Matrix& h) {
  {
    const Matrix num = matmul_tn(w, v);
    const Matrix den = matmul(matmul_tn(w, w), h);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h.data()[i] *= num.data()[i] / (den.data()[i] + kEpsilon);
    }
  }
  const Matrix num = matmul_nt(v, h);
  const Matrix den = matmul(w, matmul_nt(h, h));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data()[i] *= num.data()[i] / (den.data()[i] + kEpsilon);
  }
}

void mu_step(const Reduced& r, DualNmfState& s) {
  lee_seung_step(r.m_a, s.w_a, s.h_a);
  lee_seung_step(r.m_b, s.w_b, s.h_b);
}

DualNmfState mu_step(const DualNmfProblem& p, const DualNmfState& s) {
  DualNmfState out = s;
  mu_step(reduce(p), out);
  return out;
}

DualNmfState run_nmf(const DualNmfProblem& p, const RunOptions& opt) {
  const Conditions cond = check_conditions(p);
  if (!cond.all()) {
    throw ConfigError("run_nmf: convergence conditions not satisfied: " + cond.failing() +
                      "; apply the positive perturbation first");
  }
  p.validate();
  const Reduced r = reduce(p);
  DualNmfState s = init_state(p, opt.seed);
  s.loss_trace.reserve(opt.max_iters + 1);
  s.loss_trace.push_back(dual_loss(p, s));
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    mu_step(r, s);
    const double loss = dual_loss(p, s);
    if (!std::isfinite(loss)) {
      throw NumericError("run_nmf: non-finite loss at iteration " + std::to_string(it + 1));
    }
    const double prev = s.loss_trace.back();
    s.loss_trace.push_back(loss);
    if (std::abs(loss - prev) < opt.tol) break;
  }
  return s;
}

DualNmfProblem random_problem(std::size_t rows, std::size_t cols, std::size_t rank, double alpha,
                              std::uint64_t seed) {
  if (rows < 1 || cols < 1 || rank < 1) throw ConfigError("random_problem: empty shape or rank");
  Rng rng(seed);
  auto ratings = [&] {
    Matrix w(rows, rank), h(rank, cols);
    for (double& v : w.data()) v = rng.uniform();
    for (double& v : h.data()) v = rng.uniform();
    Matrix v = matmul(w, h);
    const double top = *std::max_element(v.data().begin(), v.data().end());
    return top > 0.0 ? (1.0 / top) * v : v;
  };
  DualNmfProblem p;
  p.v_a = ratings();
  p.v_b = ratings();
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  p.x = Matrix(rows, rows);
  for (std::size_t i = 0; i < rows; ++i) p.x(i, perm[i]) = 1.0;
  p.alpha = alpha;
  p.rank = rank;
  return p;
}

}  // namespace ddtcdr::nmf
