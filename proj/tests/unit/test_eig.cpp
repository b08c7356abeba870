#include "mpopf/eig.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

namespace {

Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      m(i, j) = u(rng);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

TEST(Eig, Identity) {
  const auto r = mpopf::eigh(Eigen::MatrixXd::Identity(5, 5));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(r.values(i), 1.0, 1e-12);
  EXPECT_LT((r.vectors * r.vectors.transpose() - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-10);
}

TEST(Eig, DiagonalMatrix) {
  Eigen::MatrixXd m = Eigen::Vector3d(3.0, -2.0, 5.0).asDiagonal();
  const auto r = mpopf::eigh(m);
  EXPECT_NEAR(r.values(0), -2.0, 1e-12);
  EXPECT_NEAR(r.values(1), 3.0, 1e-12);
  EXPECT_NEAR(r.values(2), 5.0, 1e-12);

  const auto p = mpopf::min_eigenpair(m);
  EXPECT_NEAR(p.value, -2.0, 1e-12);
  EXPECT_NEAR(std::abs(p.vector(1)), 1.0, 1e-12);
  EXPECT_NEAR(p.vector(0), 0.0, 1e-12);
  EXPECT_NEAR(p.vector(2), 0.0, 1e-12);
}

TEST(Eig, MatchesReferenceDecomposition) {
  std::mt19937_64 rng(20240911);
  std::uniform_int_distribution<int> dim(1, 32);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(rng);
    const Eigen::MatrixXd m = random_symmetric(n, rng);
    const auto r = mpopf::eigh(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
    ASSERT_EQ(r.values.size(), n);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(r.values(i), ref.eigenvalues()(i), 1e-8) << "n=" << n << " trial=" << trial;
    }
    // reconstruction and orthonormality rather than vector-by-vector
    // comparison, since eigenvectors are only defined up to sign/rotation
    const Eigen::MatrixXd rec =
        r.vectors * r.values.asDiagonal() * r.vectors.transpose();
    EXPECT_LT((rec - m).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((r.vectors.transpose() * r.vectors - Eigen::MatrixXd::Identity(n, n))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-10);
  }
}

TEST(Eig, RayleighQuotientDominatesMinEigenvalue) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd m = random_symmetric(12, rng);
    const auto p = mpopf::min_eigenpair(m);
    EXPECT_LT((m * p.vector - p.value * p.vector).norm(), 1e-8);
    for (int k = 0; k < 50; ++k) {
      Eigen::VectorXd v(12);
      for (int i = 0; i < 12; ++i) v(i) = g(rng);
      v.normalize();
      EXPECT_GE(v.dot(m * v), p.value - 1e-10);
    }
  }
}

TEST(Eig, RepeatedEigenvalues) {
  // block with a double eigenvalue; spectrum must still come out exact
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m << 2, 1, 0, 0,
       1, 2, 0, 0,
       0, 0, 3, 0,
       0, 0, 0, 1;
  const auto r = mpopf::eigh(m);
  EXPECT_NEAR(r.values(0), 1.0, 1e-12);
  EXPECT_NEAR(r.values(1), 1.0, 1e-12);
  EXPECT_NEAR(r.values(2), 3.0, 1e-12);
  EXPECT_NEAR(r.values(3), 3.0, 1e-12);
}

TEST(Eig, RejectsBadInput) {
  EXPECT_THROW(mpopf::eigh(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
  Eigen::MatrixXd m(2, 2);
  m << 0, 1, -1, 0;  // skew
  EXPECT_THROW(mpopf::eigh(m), std::invalid_argument);
}

}  // namespace
