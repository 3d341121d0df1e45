#include "afd/common.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace afd;

TEST(Seeds, DeriveSeedIsDeterministicAndSpreads) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(derive_seed(7, a, b));
  EXPECT_EQ(seen.size(), 2500u);
  EXPECT_NE(derive_seed(7, 1, 0), derive_seed(7, 0, 1));
}

TEST(Triu, RoundTripsSymmetricMatrices) {
  Rng rng(3);
  for (int n = 1; n <= 5; ++n) {
    Matrix m(n, n);
    for (int i = 0; i < n * n; ++i) m.data()[i] = standard_normal(rng);
    const Matrix s = symmetrize(m);
    const Vector packed = triu(s);
    EXPECT_EQ(packed.size(), triu_size(n));
    EXPECT_EQ(from_triu(packed, n), s);
  }
}

TEST(Triu, RowMajorUpperOrder) {
  Matrix m(3, 3);
  m << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  const Vector expected = (Vector(6) << 1, 2, 3, 4, 5, 6).finished();
  EXPECT_EQ(triu(m), expected);
  EXPECT_THROW(from_triu(expected, 2), ContractViolation);
}

TEST(Psd, DetectsIndefiniteAndAsymmetric) {
  EXPECT_TRUE(is_symmetric_psd(Matrix::Identity(3, 3)));
  EXPECT_TRUE(is_symmetric_psd(Matrix::Zero(2, 2)));
  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  EXPECT_FALSE(is_symmetric_psd(indefinite));
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  EXPECT_FALSE(is_symmetric_psd(asym));
  Matrix nan = Matrix::Identity(2, 2);
  nan(0, 0) = std::nan("");
  EXPECT_FALSE(is_symmetric_psd(nan));
}

TEST(Psd, FactorReproducesSingularMatrix) {
  Matrix m(3, 3);
  m << 4, 2, 0, 2, 1, 0, 0, 0, 0;  // rank one
  const Matrix l = psd_factor(m);
  EXPECT_LT((l * l.transpose() - m).norm(), 1e-12);
}

TEST(SampleBall, StaysInsideAndFillsRadially) {
  Rng rng(11);
  const int n = 20000;
  int inside_half = 0;
  for (int i = 0; i < n; ++i) {
    const Vector x = sample_ball(rng, 3, 0.1);
    ASSERT_LE(x.norm(), 0.1 + 1e-15);
    if (x.norm() <= 0.05) ++inside_half;
  }
  // Uniform in a 3-ball: P(r ≤ R/2) = 1/8.
  EXPECT_NEAR(static_cast<double>(inside_half) / n, 0.125, 0.01);
  EXPECT_EQ(sample_ball(rng, 3, 0.0), Vector::Zero(3));
}
