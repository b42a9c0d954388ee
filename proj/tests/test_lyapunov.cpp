#include <gtest/gtest.h>

#include <cmath>

#include "msd/error.hpp"
#include "msd/lyapunov.hpp"

using msd::ChiOptions;
using msd::ExponentMethod;
using msd::LinearSde;
using msd::Matrix;
using msd::Vector;

namespace {

LinearSde scalar(double a, double b) {
  return LinearSde::from_strings({{"a"}}, {{"b"}}, {{"a", a}, {"b", b}});
}

LinearSde diag_ode(double a1, double a2) {
  return LinearSde::from_strings({{"a1", "0"}, {"0", "a2"}}, {{"0", "0"}, {"0", "0"}},
                                 {{"a1", a1}, {"a2", a2}});
}

Vector unit(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST(Chi, ScalarLogNormalRate) {
  const auto est = msd::chi_estimate(scalar(-1, 0.5), unit(1), 50.0);
  EXPECT_NEAR(est.chi, 2 * -1.0 + 0.25, 0.01);
  EXPECT_EQ(est.tail_values.size(), 200u);
  for (const auto& [t, v] : est.tail_values) {
    EXPECT_GE(t, 25.0 - 1e-9);
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Chi, ZeroSystemIsExactlyZero) {
  const auto sys = LinearSde::from_strings({{"0"}}, {{"0"}}, {});
  EXPECT_EQ(msd::chi_estimate(sys, unit(3), 10.0).chi, 0.0);
}

TEST(Chi, DiagonalAxis) {
  Vector e2(2);
  e2 << 0, 1;
  EXPECT_NEAR(msd::chi_estimate(diag_ode(-1, -2), e2, 50.0).chi, -4.0, 0.01);
}

TEST(Chi, ScalingInvarianceIsExact) {
  const auto sys = msd::gallery("triangular-2x2").system;
  Vector u(2);
  u << 0.3, -0.7;
  const double a = msd::chi_estimate(sys, u, 20.0).chi;
  const double b = msd::chi_estimate(sys, 4.0 * u, 20.0).chi;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Chi, Validation) {
  EXPECT_THROW(msd::chi_estimate(scalar(-1, 0.5), unit(0), 10.0), msd::ValidationError);
  EXPECT_THROW(msd::chi_estimate(scalar(-1, 0.5), unit(1), -1.0), msd::ValidationError);
  EXPECT_THROW(msd::chi_estimate(scalar(-1, 0.5), Vector::Ones(2), 1.0), msd::ValidationError);
}

TEST(Chi, MonteCarloAgreesWithOde) {
  const auto sys = scalar(-0.5, 0.4);
  ChiOptions mc;
  mc.method = ExponentMethod::mc;
  mc.dt = 1e-2;
  mc.paths = 10000;
  mc.seed = 7;
  const auto a = msd::chi_estimate(sys, unit(1), 4.0);
  const auto b = msd::chi_estimate(sys, unit(1), 4.0, mc);
  EXPECT_GT(b.std_error, 0.0);
  EXPECT_LE(std::abs(a.chi - b.chi), std::max(0.05, 3 * b.std_error));
}

TEST(Spectrum, DiagonalValuesAndSplit) {
  const auto s = msd::spectrum(diag_ode(-1, -2), 50.0, 6);
  ASSERT_EQ(s.values.size(), 2u);
  EXPECT_NEAR(s.values[0], -4.0, 0.01);
  EXPECT_NEAR(s.values[1], -2.0, 0.01);
  EXPECT_EQ(s.split, 2u);
  EXPECT_EQ(s.multiplicities[0] + s.multiplicities[1], 2u);
  // Generic vectors see the top exponent.
  for (double v : s.random_chi) EXPECT_NEAR(v, -2.0, 0.05);
  EXPECT_TRUE(s.outliers.empty());
}

TEST(Spectrum, ScalarAndZeroSystems) {
  const auto g = msd::spectrum(scalar(-1, 0.5), 50.0, 3);
  ASSERT_EQ(g.values.size(), 1u);
  EXPECT_NEAR(g.values[0], -1.75, 0.01);
  const auto z = msd::spectrum(
      LinearSde::from_strings({{"0", "0", "0"}, {"0", "0", "0"}, {"0", "0", "0"}},
                              {{"0", "0", "0"}, {"0", "0", "0"}, {"0", "0", "0"}}, {}),
      10.0, 3);
  ASSERT_EQ(z.values.size(), 1u);
  EXPECT_EQ(z.values[0], 0.0);
  EXPECT_EQ(z.multiplicities[0], 3u);
  EXPECT_EQ(z.split, 0u);
  EXPECT_THROW(msd::spectrum(z.values.empty() ? scalar(0, 0) : diag_ode(-1, -2), 10.0, 1),
               msd::ValidationError);
}

TEST(Duality, ScalarSumIsFourBSquared) {
  const auto rep = msd::duality_defect(scalar(-1, 0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 50.0);
  ASSERT_EQ(rep.sums.size(), 1u);
  EXPECT_NEAR(rep.chi[0], -1.75, 0.01);
  EXPECT_NEAR(rep.chi_dual[0], 2.0 + 0.75, 0.01);
  EXPECT_NEAR(rep.sums[0], 1.0, 0.02);
  EXPECT_TRUE(rep.all_nonnegative);
  EXPECT_LE(rep.pathwise_drift, 0.01);
}

TEST(Duality, DeterministicDiagonalSumsVanish) {
  const auto rep = msd::duality_defect(diag_ode(-1, 0.5), Matrix::Identity(2, 2), Matrix::Identity(2, 2), 50.0);
  for (double s : rep.sums) EXPECT_NEAR(s, 0.0, 0.02);
  // Milstein for Φ and Ψ with G = 0 leaves an O(dt) product defect.
  EXPECT_LE(rep.pathwise_drift, 0.01);
}

TEST(Duality, CoupledSystemDriftAndSums) {
  const auto sys = msd::gallery("triangular-2x2").system;
  Matrix B(2, 2);
  B << 1, 1, 0, 1;
  const Matrix D = B.inverse().transpose();
  const auto rep = msd::duality_defect(sys, B, D, 30.0);
  for (double s : rep.sums) EXPECT_GE(s, -0.05);
  EXPECT_LE(rep.pathwise_drift, 0.01);
}

TEST(Duality, RejectsNonDualBases) {
  Matrix D = Matrix::Identity(2, 2);
  D(0, 1) = 1.0;  // <u_1, u~_2> = 1
  EXPECT_THROW(msd::duality_defect(diag_ode(-1, -2), Matrix::Identity(2, 2), D, 10.0),
               msd::ValidationError);
}

TEST(Regularity, ScalarAndRegularCases) {
  const auto g = msd::regularity_estimate(scalar(-1, 0.5), {msd::canonical_pair(1)}, 50.0);
  EXPECT_NEAR(g.gamma_upper_estimate, 1.0, 0.02);
  const auto d = msd::regularity_estimate(diag_ode(-1, -2), {msd::canonical_pair(2)}, 50.0);
  EXPECT_NEAR(d.gamma_upper_estimate, 0.0, 0.02);
  EXPECT_THROW(msd::regularity_estimate(diag_ode(-1, -2), {}, 10.0), msd::ValidationError);
}

TEST(Regularity, MinimumOverPairs) {
  const auto sys = msd::gallery("triangular-2x2").system;
  Matrix B(2, 2);
  B << 1, 1, 0, 1;
  const auto est = msd::regularity_estimate(
      sys, {{B, B.inverse().transpose()}, msd::canonical_pair(2)}, 30.0);
  ASSERT_EQ(est.pair_sums.size(), 2u);
  double m0 = std::max(est.pair_sums[0][0], est.pair_sums[0][1]);
  double m1 = std::max(est.pair_sums[1][0], est.pair_sums[1][1]);
  EXPECT_DOUBLE_EQ(est.gamma_upper_estimate, std::min(m0, m1));
}

TEST(Regularity, PerronOdeCanonicalPair) {
  // u_1 = exp(−a t + b(t cos t − sin t)), adjoint exponent with the sign flipped:
  // the limsups are −2a + 2b and 2a + 2b, so the sum is 4b.
  const auto sys = msd::gallery("perron-ode").system;
  const auto est = msd::regularity_estimate(sys, {msd::canonical_pair(2)}, 100.0);
  EXPECT_GE(est.gamma_upper_estimate, 0.0);
  EXPECT_LE(est.gamma_upper_estimate, 8.3);
  EXPECT_NEAR(est.gamma_upper_estimate, 4.0, 0.1);
}
