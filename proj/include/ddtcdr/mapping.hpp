#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "ddtcdr/numeric.hpp"

namespace ddtcdr {

// Square map between the user-embedding spaces of two domains. Kept
// orthogonal, so its transpose is its inverse.
struct OrthogonalMap {
  Matrix x;
  std::pair<std::string, std::string> domain_pair{"A", "B"};

  std::size_t dim() const noexcept { return x.rows(); }
  // ||X^T X - I||_F
  double orthogonality_error() const;

  bool operator==(const OrthogonalMap&) const = default;
};

struct ProjectionOptions {
  double tol = 1e-6;
  int max_iters = 50;
};

// Random orthogonal d x d matrix: a Gaussian draw orthogonalized to its polar
// factor.
OrthogonalMap init_map(std::size_t d, std::uint64_t seed);

Vector map_forward(const OrthogonalMap& m, std::span<const double> e);
Vector map_inverse(const OrthogonalMap& m, std::span<const double> e);

struct PenaltyResult {
  double loss;  // ||X^T X - I||_F^2
  Matrix grad;  // 4 X (X^T X - I)
};

PenaltyResult ortho_penalty(const OrthogonalMap& m);

// Nearest orthogonal matrix (polar factor) by Newton-Schulz iteration
// X <- X (3I - X^T X) / 2, run until ||X^T X - I||_F <= tol. The input is
// first scaled into the iteration's convergence region when its spectral norm
// bound reaches sqrt(3). Throws ConvergenceError after max_iters.
OrthogonalMap project_orthogonal(const OrthogonalMap& m, const ProjectionOptions& opt = {});

}  // namespace ddtcdr
