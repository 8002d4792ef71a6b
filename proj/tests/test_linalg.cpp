#include <gtest/gtest.h>

#include <cmath>

#include "tarq/linalg.hpp"
#include "tarq/reference.hpp"
#include "test_util.hpp"

namespace tarq {
namespace {

using testing::random_matrix;
using testing::random_spd;

double rel_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).frobenius_norm() / b.frobenius_norm();
}

TEST(SymMatrix, ConstructionEnforcesExactSymmetry) {
  Matrix m(2, 2, std::vector<double>{1.0, 2.0, 4.0, 5.0});
  SymMatrix s(m);
  EXPECT_EQ(s(0, 1), s(1, 0));
  EXPECT_EQ(s(0, 1), 3.0);
}

TEST(SymMatrix, SymmetricInputIsUntouched) {
  Rng rng(1);
  const SymMatrix h = random_spd(rng, 7);
  EXPECT_EQ(SymMatrix(h.matrix()), h);
}

TEST(SymMatrix, RejectsNonSquare) {
  EXPECT_THROW(SymMatrix(Matrix(2, 3)), Error);
}

TEST(Cholesky, ReconstructsRandomSpd) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const SymMatrix h = random_spd(rng, 12);
    const CholFactor f = cholesky_upper(h);
    EXPECT_LE(rel_frobenius(f.reconstruct(), h.matrix()), 1e-9);
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_GE(f.upper(i, i), 0.0);
      for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(f.upper(i, j), 0.0);
    }
  }
}

TEST(Cholesky, SingularThrows) {
  const SymMatrix z = SymMatrix::zeros(3);
  try {
    cholesky_upper(z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularMetric);
  }
}

TEST(DampedInverse, IdentityWithoutDamping) {
  const SymMatrix inv = damped_inverse(SymMatrix::identity(3), Damping::absolute(0.0));
  EXPECT_EQ(inv, SymMatrix::identity(3));
}

TEST(DampedInverse, DiagonalWithAbsoluteShift) {
  const std::vector<double> d{4.0, 1.0};
  const SymMatrix inv = damped_inverse(SymMatrix::diagonal(d), Damping::absolute(1.0));
  EXPECT_DOUBLE_EQ(inv(0, 0), 0.2);
  EXPECT_DOUBLE_EQ(inv(1, 1), 0.5);
  EXPECT_EQ(inv(0, 1), 0.0);
}

TEST(DampedInverse, MultiplyBack) {
  Rng rng(3);
  const SymMatrix h = random_spd(rng, 8);
  const Damping damp = Damping::relative(0.01);
  const SymMatrix inv = damped_inverse(h, damp);
  Matrix shifted = h.matrix();
  for (std::size_t i = 0; i < 8; ++i) shifted(i, i) += damp.shift_for(h);
  EXPECT_LE((matmul(shifted, inv.matrix()) - Matrix::identity(8)).frobenius_norm(), 1e-9);
}

TEST(DampedInverse, SingularThrows) {
  EXPECT_THROW(damped_inverse(SymMatrix::zeros(2), Damping::relative(0.01)), Error);
}

TEST(CholeskyOfInverse, Identity) {
  const CholFactor f = cholesky_of_inverse(SymMatrix::identity(4), Damping::absolute(0.0));
  EXPECT_EQ(f.upper, Matrix::identity(4));
}

TEST(CholeskyOfInverse, Scalar) {
  const std::vector<double> d{4.0};
  const CholFactor f = cholesky_of_inverse(SymMatrix::diagonal(d), Damping::absolute(0.0));
  EXPECT_DOUBLE_EQ(f.upper(0, 0), 0.5);
}

TEST(CholeskyOfInverse, MultiplyBack) {
  Rng rng(4);
  const SymMatrix h = random_spd(rng, 16);
  const Damping damp = Damping::relative(0.01);
  const CholFactor f = cholesky_of_inverse(h, damp);
  const SymMatrix inv = damped_inverse(h, damp);
  EXPECT_LE((f.reconstruct() - inv.matrix()).frobenius_norm(),
            1e-9 * inv.matrix().frobenius_norm());
}

TEST(WeightedInner, UnitVector) {
  Matrix e1(1, 5);
  e1(0, 0) = 1.0;
  EXPECT_EQ(weighted_inner(e1, e1, SymMatrix::identity(5)), 1.0);
}

TEST(WeightedInner, ZeroOperand) {
  Rng rng(5);
  const Matrix a = random_matrix(rng, 3, 4);
  EXPECT_EQ(weighted_inner(a, Matrix(3, 4), random_spd(rng, 4)), 0.0);
}

TEST(WeightedInner, MatchesTripleLoop) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(rng, 3, 4);
    const Matrix b = random_matrix(rng, 3, 4);
    const SymMatrix h = random_spd(rng, 4);
    const double got = weighted_inner(a, b, h);
    const double want = reference::weighted_inner(a, b, h);
    EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST(WeightedInner, DimMismatch) {
  try {
    weighted_inner(Matrix(2, 3), Matrix(2, 4), SymMatrix::identity(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimMismatch);
  }
}

TEST(WeightedLoss, ZeroPerturbation) {
  EXPECT_EQ(weighted_loss(Matrix(2, 3), SymMatrix::identity(3)), 0.0);
}

TEST(WeightedLoss, DiagonalMetric) {
  Matrix e1(1, 3);
  e1(0, 0) = 1.0;
  const std::vector<double> d{3.0, 5.0, 7.0};
  EXPECT_EQ(weighted_loss(e1, SymMatrix::diagonal(d)), 3.0);
}

TEST(WeightedLoss, EqualsPerPositionSum) {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 40, 6);
  const Matrix dw = random_matrix(rng, 3, 6);
  const SymMatrix h(matmul(x.transposed(), x));
  double direct = 0.0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t i = 0; i < dw.rows(); ++i) {
      double y = 0.0;
      for (std::size_t j = 0; j < 6; ++j) y += dw(i, j) * x(t, j);
      direct += y * y;
    }
  }
  EXPECT_NEAR(weighted_loss(dw, h), direct, 1e-10 * direct);
}

TEST(Matmul, SmallProduct) {
  const Matrix a(2, 2, std::vector<double>{1, 2, 3, 4});
  const Matrix b(2, 1, std::vector<double>{5, 6});
  EXPECT_EQ(matmul(a, b), Matrix(2, 1, std::vector<double>{17, 39}));
  EXPECT_THROW(matmul(a, Matrix(3, 1)), Error);
}

}  // namespace
}  // namespace tarq
