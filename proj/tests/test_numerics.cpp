#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "msd/error.hpp"
#include "msd/linalg.hpp"
#include "msd/parallel.hpp"
#include "msd/random.hpp"

using msd::Matrix;

namespace {

Matrix random_matrix(std::mt19937& rng, int n) {
  std::normal_distribution<double> nd;
  Matrix M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = nd(rng);
  return M + 0.5 * n * Matrix::Identity(n, n);
}

// Denman–Beavers iteration for the principal square root.
Matrix denman_beavers(const Matrix& A) {
  Matrix Y = A, Z = Matrix::Identity(A.rows(), A.cols());
  for (int k = 0; k < 100; ++k) {
    const Matrix Yn = 0.5 * (Y + Z.inverse());
    const Matrix Zn = 0.5 * (Z + Y.inverse());
    Y = Yn;
    Z = Zn;
  }
  return Y;
}

}  // namespace

TEST(Qr, IdentityAndTriangularInputs) {
  const auto id = msd::gram_schmidt_qr(Matrix::Identity(3, 3));
  EXPECT_EQ(id.Q, Matrix::Identity(3, 3));
  EXPECT_EQ(id.R, Matrix::Identity(3, 3));
  Matrix M(2, 2);
  M << 1, 1, 0, 1;
  const auto qr = msd::gram_schmidt_qr(M);
  EXPECT_LT((qr.Q - Matrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_LT((qr.R - M).norm(), 1e-15);
}

TEST(Qr, RankDeficiencyNamesColumn) {
  Matrix M(2, 2);
  M << 1, 2, 2, 4;
  try {
    msd::gram_schmidt_qr(M);
    FAIL();
  } catch (const msd::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
  }
}

TEST(Qr, ThousandRandomMatrices) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 8;
    const Matrix M = random_matrix(rng, n);
    const auto qr = msd::gram_schmidt_qr(M);
    ASSERT_LE((qr.Q.transpose() * qr.Q - Matrix::Identity(n, n)).norm(), 1e-10);
    ASSERT_LE((qr.Q * qr.R - M).norm() / M.norm(), 1e-10);
    for (int i = 0; i < n; ++i) {
      ASSERT_GT(qr.R(i, i), 0.0);
      for (int j = 0; j < i; ++j) ASSERT_EQ(qr.R(i, j), 0.0);
    }
  }
}

TEST(SpdSqrt, Examples) {
  const msd::Projector P(2, 1);
  EXPECT_LT((msd::spd_sqrt_commuting(Matrix::Identity(2, 2), P) - Matrix::Identity(2, 2)).norm(), 1e-15);
  Matrix g = Matrix::Zero(2, 2);
  g(0, 0) = 4;
  g(1, 1) = 9;
  Matrix expect = Matrix::Zero(2, 2);
  expect(0, 0) = 2;
  expect(1, 1) = 3;
  EXPECT_LT((msd::spd_sqrt_commuting(g, P) - expect).norm(), 1e-14);
  g(1, 1) = -1;
  g(0, 0) = 1;
  EXPECT_THROW(msd::spd_sqrt_commuting(g, P), msd::NumericError);
  Matrix ns = Matrix::Identity(2, 2);
  ns(0, 1) = 0.5;
  EXPECT_THROW(msd::spd_sqrt_commuting(ns, P), msd::ValidationError);
}

TEST(SpdSqrt, MatchesFullMatrixRootOfProjectedGram) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 6;
    const int k = trial % (n + 1);
    const Matrix X = random_matrix(rng, n);
    const Matrix gram = X.transpose() * X;
    const msd::Projector P(n, k);
    const Matrix Pm = P.matrix(), Qm = P.complement();
    const Matrix projected = Pm * gram * Pm + Qm * gram * Qm;
    const Matrix R = msd::spd_sqrt_commuting(gram, P);
    const Matrix ref = denman_beavers(projected);
    ASSERT_LE((R - ref).norm() / ref.norm(), 1e-9);
    ASSERT_LE((R * R - projected).norm() / projected.norm(), 1e-10);
    ASSERT_LE((Pm * R - R * Pm).norm(), 1e-10);
  }
}

TEST(Projector, CanonicalForm) {
  const auto P = msd::make_projector(2, 1);
  Matrix expect = Matrix::Zero(2, 2);
  expect(0, 0) = 1;
  EXPECT_EQ(P.matrix(), expect);
  EXPECT_EQ(msd::make_projector(3, 0).matrix(), Matrix::Zero(3, 3));
  EXPECT_THROW(msd::make_projector(2, 3), msd::ValidationError);
  const Matrix Pm = msd::make_projector(4, 2).matrix();
  EXPECT_EQ(Pm * Pm, Pm);
  EXPECT_EQ(Pm + msd::make_projector(4, 2).complement(), Matrix::Identity(4, 4));
}

TEST(Rng, PhiloxKnownAnswers) {
  // Published Philox4x32-10 test vectors.
  const auto zero = msd::RngStream::block(0, 0, 0);
  EXPECT_EQ(zero[0], 0x6627e8d5u);
  EXPECT_EQ(zero[1], 0xe169c58du);
  EXPECT_EQ(zero[2], 0xbc57ac4cu);
  EXPECT_EQ(zero[3], 0x9b00dbd8u);
  const auto ones = msd::RngStream::block(~0ull, ~0ull, ~0ull);
  EXPECT_EQ(ones[0], 0x408f276du);
  EXPECT_EQ(ones[1], 0x41c83b0eu);
  EXPECT_EQ(ones[2], 0xa20bc7c6u);
  EXPECT_EQ(ones[3], 0x6d5451fdu);
}

TEST(Rng, NormalQuantileInvertsCdf) {
  for (double p : {1e-300, 1e-12, 1e-4, 0.02, 0.3, 0.5, 0.77, 0.99, 1 - 1e-9}) {
    const double x = msd::normal_quantile(p);
    const double back = 0.5 * std::erfc(-x / std::sqrt(2.0));
    EXPECT_NEAR(back / p, 1.0, 1e-12) << p;
  }
}

TEST(Brownian, DeterministicPerStream) {
  const auto a = msd::brownian(0.0, 0.01, 1000, msd::RngStream(42, 3));
  const auto b = msd::brownian(0.0, 0.01, 1000, msd::RngStream(42, 3));
  const auto c = msd::brownian(0.0, 0.01, 1000, msd::RngStream(42, 4));
  EXPECT_EQ(a.increments, b.increments);
  EXPECT_NE(a.increments, c.increments);
}

TEST(Brownian, MomentsOfIncrements) {
  const double dt = 0.01;
  const std::size_t n = 100000;
  const auto path = msd::brownian(0.0, dt, n, msd::RngStream(2024, 0));
  const auto ms = msd::mean_stderr(path.increments);
  EXPECT_LT(std::fabs(ms.mean), 4.0 * std::sqrt(dt / n));
  const double var = ms.std_error * ms.std_error * n;
  EXPECT_NEAR(var / dt, 1.0, 0.05);
  const auto w = path.cumulative();
  EXPECT_EQ(w.size(), n + 1);
  EXPECT_EQ(w[0], 0.0);
  const auto coarse = path.coarsen(4);
  EXPECT_EQ(coarse.steps(), n / 4);
  EXPECT_NEAR(coarse.cumulative().back(), w.back(), 1e-9);
}

TEST(Parallel, ReductionIndependentOfWorkerCount) {
  std::vector<double> out1(1000), out8(1000);
  msd::set_thread_count(1);
  msd::parallel_for(1000, [&](std::size_t i) { out1[i] = std::sin(static_cast<double>(i)); });
  msd::set_thread_count(8);
  msd::parallel_for(1000, [&](std::size_t i) { out8[i] = std::sin(static_cast<double>(i)); });
  msd::set_thread_count(1);
  EXPECT_EQ(msd::pairwise_sum(out1), msd::pairwise_sum(out8));
  EXPECT_THROW(msd::parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw msd::NumericError("boom");
               }),
               msd::NumericError);
}
