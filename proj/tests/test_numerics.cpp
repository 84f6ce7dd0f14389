#include <gtest/gtest.h>

#include <cmath>

#include "repdrift/numerics/linalg.hpp"
#include "repdrift/numerics/rng.hpp"
#include "support/test_util.hpp"

namespace repdrift {
namespace {

using testing::orthogonality_error;
using testing::random_matrix;
using testing::reconstruct;

TEST(Svd, IdentityHasUnitSingularValues) {
  const Svd d = svd(Matrix::identity(3));
  ASSERT_EQ(d.s.size(), 3u);
  for (double s : d.s) EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(Svd, DiagonalMatrix) {
  const Matrix a{{3, 0, 0}, {0, 2, 0}, {0, 0, 1}};
  const Svd d = svd(a);
  EXPECT_NEAR(d.s[0], 3.0, 1e-14);
  EXPECT_NEAR(d.s[1], 2.0, 1e-14);
  EXPECT_NEAR(d.s[2], 1.0, 1e-14);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(std::abs(d.u(i, i)), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(d.v(i, i)), 1.0, 1e-14);
  }
}

TEST(Svd, RandomReconstructionAndGram) {
  Rng rng(7);
  const Matrix a = random_matrix(rng, 5, 3);
  const Svd d = svd(a);
  EXPECT_LT(frobenius_norm(a - reconstruct(d.u, d.s, d.v)) / frobenius_norm(a), 1e-10);
  EXPECT_LT(orthogonality_error(d.u), 1e-10);
  EXPECT_LT(orthogonality_error(d.v), 1e-10);
}

TEST(Svd, PropertyOverShapesIncludingWideAndRankDeficient) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.below(9);
    const std::size_t n = 1 + rng.below(9);
    Matrix a = random_matrix(rng, m, n);
    if (trial % 3 == 0 && n > 1)  // duplicate a column to force rank deficiency
      for (std::size_t i = 0; i < m; ++i) a(i, n - 1) = a(i, 0);
    const Svd d = svd(a);
    const double norm = frobenius_norm(a);
    EXPECT_LT(frobenius_norm(a - reconstruct(d.u, d.s, d.v)) / norm, 1e-10) << m << "x" << n;
    EXPECT_LT(orthogonality_error(d.u), 1e-10) << m << "x" << n;
    EXPECT_LT(orthogonality_error(d.v), 1e-10) << m << "x" << n;
    for (std::size_t k = 0; k < d.s.size(); ++k) {
      EXPECT_GE(d.s[k], 0.0);
      if (k) {
        EXPECT_GE(d.s[k - 1], d.s[k]);
      }
    }
  }
}

TEST(Svd, ZeroMatrixStillHasOrthonormalFactors) {
  const Svd d = svd(Matrix(4, 3));
  for (double s : d.s) EXPECT_EQ(s, 0.0);
  EXPECT_LT(orthogonality_error(d.u), 1e-12);
  EXPECT_LT(orthogonality_error(d.v), 1e-12);
}

TEST(Svd, RejectsNonFinite) {
  Matrix a(2, 2);
  a(0, 0) = std::nan("");
  EXPECT_THROW(svd(a), ContractError);
}

TEST(Svd, IterationCapReportsNumericFailure) {
  Rng rng(3);
  const Matrix a = random_matrix(rng, 6, 6);
  EXPECT_THROW(svd(a, JacobiOptions{1e-12, 1}), NumericError);
}

TEST(SymEig, Diagonal) {
  const SymEig e = sym_eig(Matrix{{2, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(e.values[0], 2.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
}

TEST(SymEig, ExchangeMatrix) {
  const SymEig e = sym_eig(Matrix{{0, 1}, {1, 0}});
  EXPECT_NEAR(e.values[0], 1.0, 1e-15);
  EXPECT_NEAR(e.values[1], -1.0, 1e-15);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.vectors(0, 0)), r, 1e-15);
  EXPECT_NEAR(e.vectors(0, 0) * e.vectors(1, 0), 0.5, 1e-15);   // (1,1)/√2 up to sign
  EXPECT_NEAR(e.vectors(0, 1) * e.vectors(1, 1), -0.5, 1e-15);  // (1,-1)/√2 up to sign
}

TEST(SymEig, RandomSymmetricResidual) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = random_matrix(rng, 6, 6);
    const Matrix a = g + transpose(g);
    const SymEig e = sym_eig(a);
    Matrix vl = e.vectors;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) vl(i, j) *= e.values[j];
    EXPECT_LT(frobenius_norm(matmul(a, e.vectors) - vl), 1e-8);
    EXPECT_LT(orthogonality_error(e.vectors), 1e-10);
    for (std::size_t j = 1; j < 6; ++j) EXPECT_GE(e.values[j - 1], e.values[j]);
  }
}

TEST(SymEig, GramMatricesArePositiveSemidefinite) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 3, 7);  // rank 3 Gram of size 7
    const SymEig e = sym_eig(matmul_tn(x, x));
    for (double v : e.values) EXPECT_GE(v, -1e-9);
  }
}

TEST(SymEig, RejectsAsymmetric) {
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {0, 1}}), ContractError);
  EXPECT_THROW(sym_eig(Matrix(2, 3)), ContractError);
}

TEST(Determinant, KnownValues) {
  EXPECT_DOUBLE_EQ(determinant(Matrix{{2, 0}, {0, 3}}), 6.0);
  EXPECT_DOUBLE_EQ(determinant(Matrix{{0, 1}, {1, 0}}), -1.0);
  EXPECT_DOUBLE_EQ(determinant(Matrix{{1, 2}, {2, 4}}), 0.0);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 10000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
  Rng c(42), d(42);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(c.normal(), d.normal());
}

TEST(Rng, SubstreamsDifferAndAreReproducible) {
  const Rng root(1);
  Rng s0 = root.substream(0), s1 = root.substream(1), s0b = root.substream(0);
  const auto a = s0.next_u64();
  EXPECT_NE(a, s1.next_u64());
  EXPECT_EQ(a, s0b.next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(3);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.01);
  EXPECT_NEAR(sn / n, 0.0, 0.02);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, PermutationIsAPermutation) {
  Rng rng(8);
  auto p = rng.permutation(100);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

}  // namespace
}  // namespace repdrift
