#include "tarq/linalg.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace tarq {
namespace {

void throw_singular(std::size_t k, double pivot) {
  throw Error(ErrorCode::kSingularMetric,
              "pivot " + std::to_string(k) + " is " + std::to_string(pivot));
}

}  // namespace

Matrix CholFactor::reconstruct() const {
  return matmul(upper.transposed(), upper);
}

CholFactor cholesky_upper(const SymMatrix& a) {
  const std::size_t n = a.dim();
  require_dims(n >= 1, "cholesky of empty matrix");
  Matrix u(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    double d = a(k, k);
    for (std::size_t p = 0; p < k; ++p) d -= u(p, k) * u(p, k);
    if (!(d >= kSingularPivot)) throw_singular(k, d);
    const double ukk = std::sqrt(d);
    u(k, k) = ukk;
    for (std::size_t j = k + 1; j < n; ++j) {
      double s = a(k, j);
      for (std::size_t p = 0; p < k; ++p) s -= u(p, k) * u(p, j);
      u(k, j) = s / ukk;
    }
  }
  return {std::move(u), n};
}

SymMatrix damped_inverse(const SymMatrix& h, Damping damping) {
  const std::size_t n = h.dim();
  require_dims(n >= 1, "inverse of empty matrix");
  const double shift = damping.shift_for(h);
  Matrix shifted = h.matrix();
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += shift;
  const CholFactor f = cholesky_upper(SymMatrix(std::move(shifted)));
  const Matrix& u = f.upper;

  // A = U^T U, so A^-1 = U^-1 U^-T. Invert the triangle column by column.
  Matrix uinv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    uinv(j, j) = 1.0 / u(j, j);
    for (std::size_t ii = j; ii-- > 0;) {
      double s = 0.0;
      for (std::size_t p = ii + 1; p <= j; ++p) s += u(ii, p) * uinv(p, j);
      uinv(ii, j) = -s / u(ii, ii);
    }
  }
  Matrix inv(n, n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = j; p < n; ++p) s += uinv(i, p) * uinv(j, p);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  }
  return SymMatrix(std::move(inv));
}

CholFactor cholesky_of_inverse(const SymMatrix& h, Damping damping) {
  return cholesky_upper(damped_inverse(h, damping));
}

double weighted_inner(const Matrix& a, const Matrix& b, const SymMatrix& h) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "weighted_inner operand shapes");
  require_dims(a.cols() == h.dim(), "weighted_inner metric dimension");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> partial(m, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto arow = a.row(i);
    auto brow = b.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (arow[j] == 0.0) continue;
      double hb = 0.0;
      for (std::size_t k = 0; k < n; ++k) hb += h(j, k) * brow[k];
      s += arow[j] * hb;
    }
    partial[i] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double weighted_loss(const Matrix& delta_w, const SymMatrix& h) {
  const double v = weighted_inner(delta_w, delta_w, h);
  return v < 0.0 ? 0.0 : v;
}

}  // namespace tarq
