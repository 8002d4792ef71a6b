#pragma once

#include "tarq/matrix.hpp"

namespace tarq {

// Upper-triangular factor U with U^T U equal to the factored matrix. For the
// GPTQ sweep the factored matrix is the damped inverse metric, and row j of U
// carries the error-propagation coefficients for column j.
struct CholFactor {
  Matrix upper;
  std::size_t source_dim = 0;

  Matrix reconstruct() const;  // U^T U
};

enum class DampMode { kAbsolute, kRelative };

struct Damping {
  double value = 0.0;
  DampMode mode = DampMode::kAbsolute;

  static Damping absolute(double v) { return {v, DampMode::kAbsolute}; }
  // Shift is value * mean(diag(H)).
  static Damping relative(double v) { return {v, DampMode::kRelative}; }

  double shift_for(const SymMatrix& h) const {
    return mode == DampMode::kRelative ? value * h.mean_diagonal() : value;
  }
};

inline constexpr double kSingularPivot = 1e-300;

// Upper U with U^T U = A for SPD A. Throws SingularMetric on a pivot below
// kSingularPivot.
CholFactor cholesky_upper(const SymMatrix& a);

// (H + shift I)^-1 through a Cholesky solve.
SymMatrix damped_inverse(const SymMatrix& h, Damping damping);

// Upper-triangular factor of (H + shift I)^-1.
CholFactor cholesky_of_inverse(const SymMatrix& h, Damping damping);

// tr(A H B^T).
double weighted_inner(const Matrix& a, const Matrix& b, const SymMatrix& h);

// tr(dW H dW^T), clamped to zero when rounding makes it slightly negative.
double weighted_loss(const Matrix& delta_w, const SymMatrix& h);

}  // namespace tarq
