#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddtcdr/numeric.hpp"

namespace ddtcdr::nmf {

// Two nonnegative rating matrices coupled through a fixed mixing matrix:
//   V_A ~ (1 - a) W_A H_A + a X W_B H_B
//   V_B ~ (1 - a) W_B H_B + a X^T W_A H_A
struct DualNmfProblem {
  Matrix v_a;  // m x n
  Matrix v_b;  // m x n
  Matrix x;    // m x m, orthogonal
  double alpha = 0.1;
  std::size_t rank = 4;

  void validate() const;
};

struct DualNmfState {
  Matrix w_a, h_a, w_b, h_b;
  std::vector<double> loss_trace;  // dual_loss before the first step, then after each step

  std::size_t iterations() const noexcept {
    return loss_trace.empty() ? 0 : loss_trace.size() - 1;
  }
};

// ||V_A - (1-a) W_A H_A - a X W_B H_B||_F^2 + ||V_B - (1-a) W_B H_B - a X^T W_A H_A||_F^2
double dual_loss(const DualNmfProblem& p, const DualNmfState& s);

struct Reduced {
  Matrix m_a;  // ((1-a) V_A - a X V_B) / (1 - 2a)
  Matrix m_b;  // ((1-a) V_B - a X^T V_A) / (1 - 2a)
};

// Single-domain targets left after eliminating the other domain's product.
// Throws ConfigError at alpha = 0.5, where the elimination is singular.
Reduced reduce(const DualNmfProblem& p);

// Inverse of reduce for orthogonal X: V_A = (1-a) m_a + a X m_b and
// V_B = (1-a) m_b + a X^T m_a.
std::pair<Matrix, Matrix> recompose(const DualNmfProblem& p, const Reduced& r);

// ||m_a - W_A H_A||_F^2 + ||m_b - W_B H_B||_F^2, the objective the
// multiplicative updates decrease.
double reduced_loss(const Reduced& r, const DualNmfState& s);

// Dual loss with both residuals passed through the elimination:
//   ||(1-a) E_A - a X E_B||^2 + ||(1-a) E_B - a X^T E_A||^2
// where E_A, E_B are the dual_loss residuals. Equals
// (1 - 2a)^2 * reduced_loss for orthogonal X.
double eliminated_loss(const DualNmfProblem& p, const DualNmfState& s);

struct Conditions {
  bool a = false;  // 2 alpha - 1 < 0
  bool b = false;  // (1 - alpha) V_B - alpha X^T V_A >= 0 entrywise
  bool c = false;  // (1 - alpha) V_A - alpha X V_B >= 0 entrywise

  bool all() const noexcept { return a && b && c; }
  // Names of the conditions that do not hold, e.g. "(b), (c)".
  std::string failing() const;
};

Conditions check_conditions(const DualNmfProblem& p);

// V + m k on every entry.
Matrix perturb(const Matrix& v, std::size_t m, double k);

// Numerical rank by Gaussian elimination with partial pivoting.
std::size_t matrix_rank(const Matrix& a, double tol = 1e-9);

// Both ratings matrices shifted by rank(X) * k, k the rating scale.
DualNmfProblem perturb_problem(const DualNmfProblem& p, double k);

// Factors drawn uniform on [0.1, 1.1) in the order W_A, H_A, W_B, H_B.
DualNmfState init_state(const DualNmfProblem& p, std::uint64_t seed);

inline constexpr double kEpsilon = 1e-12;

// Classical Lee-Seung least-squares update of one factorization V ~ W H,
// H first, then W. Denominators carry kEpsilon.
void lee_seung_step(const Matrix& v, Matrix& w, Matrix& h);

// One multiplicative update of both factorizations against the reduced
// targets. Does not touch loss_trace.
DualNmfState mu_step(const DualNmfProblem& p, const DualNmfState& s);
void mu_step(const Reduced& r, DualNmfState& s);

struct RunOptions {
  std::size_t max_iters = 5000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

// Iterates mu_step from init_state(p, seed) until the dual loss changes by
// less than tol or the budget runs out. Refuses to start (ConfigError naming
// the failing conditions) unless (a), (b) and (c) all hold.
DualNmfState run_nmf(const DualNmfProblem& p, const RunOptions& opt = {});

// Random rows x cols problem with rank-`rank` nonnegative ratings in [0, 1]
// and a random permutation matrix as X. Not perturbed.
DualNmfProblem random_problem(std::size_t rows, std::size_t cols, std::size_t rank, double alpha,
                              std::uint64_t seed);

}  // namespace ddtcdr::nmf
