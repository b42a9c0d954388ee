#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "msd/dichotomy.hpp"
#include "msd/error.hpp"

using msd::DichotomyFit;
using msd::LinearSde;
using msd::MomentSurface;
using msd::Sense;

namespace {

MomentSurface synthetic(double alpha, double beta, double scale = 1.0) {
  MomentSurface surf;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const double s = 0.5 * i, t = s + 0.5 * j;
      surf.points.push_back({s, t, scale * std::exp(-alpha * (t - s) + beta * s), 0.0, true});
    }
  return surf;
}

void expect_envelope(const MomentSurface& surf, const DichotomyFit& fit) {
  for (const auto& p : surf.points)
    if (p.t >= p.s) EXPECT_LE(p.value, fit.bound(p.s, p.t) * (1 + 1e-9));
}

}  // namespace

TEST(Surface, ScalarOracleAndDiagonal) {
  const auto gbm = msd::gallery("gbm").system;
  const auto surf = msd::dichotomy_surface(gbm, std::nullopt, {{0, 1}, {0, 2}, {1, 2}, {1, 1}});
  EXPECT_NEAR(surf.points[0].value, 0.173773943450445127, 1e-9);
  EXPECT_NEAR(surf.points[1].value, 0.0301973834223185, 1e-10);
  EXPECT_NEAR(surf.points[2].value, 0.173773943450445127, 1e-9);
  EXPECT_EQ(surf.points[3].value, 1.0);
  EXPECT_EQ(surf.method, "ode");
  const auto diag = msd::dichotomy_surface(msd::gallery("diag-2x2").system, std::nullopt, {{0.5, 0.5}, {2, 2}});
  for (const auto& p : diag.points) EXPECT_EQ(p.value, 2.0);
}

TEST(Surface, BackwardPairsUseComplement) {
  // diag(−1, −2) with G = diag(0.5, 0.3): backward in time the complement
  // block has second moment exp((−2a + 3g²)(s − t)).
  const auto sys = msd::gallery("diag-2x2").system;
  const auto surf = msd::dichotomy_surface(sys, msd::Projector(2, 1), {{2, 1}, {1, 2}});
  EXPECT_NEAR(surf.points[0].value / std::exp(4.27), 1.0, 1e-8);
  EXPECT_NEAR(surf.points[1].value, std::exp(-1.75), 1e-8);
}

TEST(Surface, NonConformalProjectorNeedsMonteCarlo) {
  const auto sys = msd::gallery("triangular-2x2").system;
  msd::SurfaceOptions o;
  o.method = msd::SurfaceMethod::ode;
  EXPECT_THROW(msd::dichotomy_surface(sys, msd::Projector(2, 1), {{0, 1}}, o), msd::ValidationError);
  msd::SurfaceOptions mc;
  mc.paths = 200;
  mc.dt = 1e-3;
  mc.node_spacing = 0.5;
  const auto surf = msd::dichotomy_surface(sys, msd::Projector(2, 1), {{0, 0.5}, {0, 1}}, mc);
  EXPECT_EQ(surf.method, "mc");
  EXPECT_GT(surf.points[0].std_error, 0.0);
  mc.node_spacing = 0.3;
  EXPECT_THROW(msd::dichotomy_surface(sys, msd::Projector(2, 1), {{0, 0.5}}, mc), msd::ValidationError);
}

TEST(Fit, RecoversExactExponential) {
  const auto surf = synthetic(2.0, 0.0);
  const auto fit = msd::fit_envelope(surf, Sense::stable);
  EXPECT_NEAR(fit.K, 1.0, 1e-6);
  EXPECT_NEAR(fit.alpha, 2.0, fit.alpha_step);
  EXPECT_EQ(fit.beta, 0.0);
  EXPECT_TRUE(fit.uniform);
  expect_envelope(surf, fit);
}

TEST(Fit, RecoversNonuniformDegree) {
  const auto surf = synthetic(2.0, 0.5);
  const auto fit = msd::fit_envelope(surf, Sense::stable);
  EXPECT_NEAR(fit.alpha, 2.0, fit.alpha_step);
  EXPECT_NEAR(fit.beta, 0.5, fit.beta_step);
  EXPECT_NEAR(std::log(fit.K), 0.0, fit.alpha_step * 4.5 + fit.beta_step * 4.5);
  EXPECT_FALSE(fit.uniform);
  expect_envelope(surf, fit);
}

TEST(Fit, ScaleEquivariance) {
  const auto a = msd::fit_envelope(synthetic(1.3, 0.2), Sense::stable);
  const auto b = msd::fit_envelope(synthetic(1.3, 0.2, 7.5), Sense::stable);
  EXPECT_NEAR(a.alpha, b.alpha, 1e-12);
  EXPECT_NEAR(a.beta, b.beta, 1e-12);
  EXPECT_NEAR(b.K / a.K, 7.5, 1e-10);
}

TEST(Fit, Validation) {
  MomentSurface tiny;
  tiny.points = {{0, 1, 1.0, 0, true}, {0, 2, 0.5, 0, true}};
  EXPECT_THROW(msd::fit_envelope(tiny, Sense::stable), msd::ValidationError);
  MomentSurface zeros = synthetic(1, 0, 0.0);
  EXPECT_THROW(msd::fit_envelope(zeros, Sense::stable), msd::ValidationError);
  EXPECT_THROW(msd::fit_envelope(synthetic(-1, 0), Sense::stable), msd::ValidationError);
}

TEST(Fit, PerronDriftOnlyStableBlock) {
  // E|Φ₁₁(t)/Φ₁₁(s)|² = exp(−2a(t−s) − 2b(t sin log t − s sin log s)); at
  // sin log s = 1, sin log t = −1 this equals e^{(−2a+2b)(t−s)+4bs}.
  const auto sys = msd::gallery("perron-sde").system.without_diffusion();
  std::vector<std::pair<double, double>> pairs;
  const double q = std::numbers::pi / 4;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 10; ++j)
      if (i + j <= 10) pairs.emplace_back(std::exp(q * i), std::exp(q * (i + j)));
  msd::SurfaceOptions o;
  o.dt = 1e-2;
  const auto surf = msd::dichotomy_surface(sys, msd::Projector(2, 1), pairs, o);
  for (const auto& p : surf.points) {
    const double log_exact =
        -2.1 * (p.t - p.s) - 2 * (p.t * std::sin(std::log(p.t)) - p.s * std::sin(std::log(p.s)));
    EXPECT_NEAR(p.log_value, log_exact, 1e-6 * std::max(1.0, std::abs(log_exact)));
  }
  const auto fit = msd::fit_envelope(surf, Sense::stable, 1);
  EXPECT_NEAR(fit.alpha, 0.1, 0.05);
  EXPECT_GE(fit.beta, 1.8);
  EXPECT_LE(fit.beta, 4.4);
  expect_envelope(surf, fit);
  const double ws = std::exp(2 * q), wt = std::exp(6 * q);
  bool found = false;
  for (const auto& [s, t] : fit.tight_points)
    found = found || (std::abs(s - ws) < 1e-9 && std::abs(t - wt) < 1e-9);
  EXPECT_TRUE(found);
}

TEST(Witness, UniformAndNonuniform) {
  const auto w = msd::uniform_witness(synthetic(2, 0), 2.0);
  EXPECT_EQ(w.flag, "uniform");
  EXPECT_NEAR(w.growth_ratio, 1.0, 1e-12);
  MomentSurface single;
  single.points = {{0, 1, 1, 0, true}, {0, 2, 1, 0, true}};
  EXPECT_THROW(msd::uniform_witness(single, 1.0), msd::ValidationError);
}

TEST(Witness, PerronOdeIsNonuniform) {
  const auto sys = msd::gallery("perron-ode").system;
  std::vector<double> s_values, offsets;
  for (int i = 0; i <= 9; ++i) s_values.push_back(0.5 + 0.5 * i);
  for (int j = 0; j <= 100; ++j) offsets.push_back(j);
  msd::SurfaceOptions o;
  o.dt = 1e-2;
  const auto surf = msd::dichotomy_surface(sys, msd::Projector(2, 1), msd::surface_grid(s_values, offsets), o);
  const auto fit = msd::fit_envelope(surf, Sense::stable, 1);
  expect_envelope(surf, fit);
  const auto w = msd::uniform_witness(surf, fit.alpha);
  EXPECT_GT(w.growth_ratio, 1e3);
  EXPECT_EQ(w.flag, "nonuniform");
}

TEST(Prediction, PrintedFormulas) {
  msd::SpectrumEstimate spec;
  spec.values = {-3.0, 1.0};
  spec.split = 1;
  const auto d = msd::predicted_exponent(spec, 0.1);
  EXPECT_DOUBLE_EQ(d.alpha, 2.9);
  EXPECT_DOUBLE_EQ(d.alpha_min_gap, 1.1);
  msd::SpectrumEstimate c;
  c.values = {-1.75};
  c.split = 1;
  const auto e = msd::predicted_exponent(c, 0.05, true, 0.0);
  EXPECT_DOUBLE_EQ(e.alpha, 1.70);
  EXPECT_DOUBLE_EQ(*e.beta, 0.1);
  msd::SpectrumEstimate pos;
  pos.values = {0.0, 1.0};
  pos.split = 0;
  EXPECT_THROW(msd::predicted_exponent(pos, 0.1), msd::ValidationError);
  EXPECT_THROW(msd::predicted_exponent(spec, 0.1, true), msd::ValidationError);
}

TEST(Prediction, BlockSystemFitsAtLeastPrediction) {
  // diag(−1, −2) ⊕ (+1) with constant diagonal noise.
  const auto sys = LinearSde::from_strings({{"-1", "0", "0"}, {"0", "-2", "0"}, {"0", "0", "1"}},
                                           {{"0.2", "0", "0"}, {"0", "0.3", "0"}, {"0", "0", "0.1"}}, {});
  const auto spec = msd::spectrum(sys, 30.0, 3);
  const auto pred = msd::predicted_exponent(spec, 0.1);
  std::vector<double> s_values{0, 1, 2, 3}, offsets;
  for (int j = 0; j <= 10; ++j) offsets.push_back(0.5 * j);
  const auto stable = msd::dichotomy_surface(sys, msd::Projector(3, 2), msd::surface_grid(s_values, offsets));
  const auto fit = msd::fit_envelope(stable, Sense::stable, 2);
  // Exponents −3.91, −1.96, 2.01: printed α = max{1.86, 2.11} = 2.11.
  EXPECT_NEAR(pred.alpha, 2.11, 0.02);
  EXPECT_NEAR(pred.alpha_min_gap, 1.86, 0.02);
  EXPECT_GE(fit.alpha, pred.alpha - 0.2);
  std::vector<std::pair<double, double>> back;
  for (double s : s_values)
    for (double tau : offsets)
      if (s - tau >= 0) back.emplace_back(s, s - tau);
  const auto unstable = msd::dichotomy_surface(sys, msd::Projector(3, 2), back);
  const auto ufit = msd::fit_envelope(unstable, Sense::unstable, 2);
  EXPECT_GE(ufit.alpha, pred.alpha - 0.2);
}

TEST(Similarity, Propagation) {
  DichotomyFit fit;
  fit.K = 1;
  fit.alpha = 2;
  fit.beta = 0.5;
  const auto out = msd::similarity_propagate(fit, 2.0);
  EXPECT_EQ(out.K, 4.0);
  EXPECT_EQ(out.alpha, 1.5);
  EXPECT_EQ(out.beta, 1.5);
  const auto same = msd::similarity_propagate(fit, 1.0, 0.0);
  EXPECT_EQ(same.K, fit.K);
  EXPECT_EQ(same.alpha, fit.alpha);
  EXPECT_EQ(same.beta, fit.beta);
  DichotomyFit bad;
  bad.alpha = 1;
  bad.beta = 1.5;
  EXPECT_THROW(msd::similarity_propagate(bad, 1.0), msd::ValidationError);
  EXPECT_THROW(msd::similarity_propagate(fit, 0.5), msd::ValidationError);
}

TEST(Decoupling, IdentityProjectorGivesPolarFactor) {
  const auto sys = msd::gallery("triangular-2x2").system;
  const auto grid = msd::TimeGrid::covering(0, 1, 1e-3);
  const auto ens = msd::simulate_fundamental(sys, grid, 50, 5, {msd::Scheme::milstein, 100});
  const auto rep = msd::decoupling_check(ens, msd::Projector(2, 2));
  EXPECT_LE(rep.max_commutator, 1e-12);
  for (double m : rep.mean_s_norm) EXPECT_NEAR(m, 1.0, 1e-10);
  EXPECT_TRUE(rep.s_bound_holds);
}

TEST(Decoupling, BlockDiagonalCommutesExactly) {
  const auto sys = msd::gallery("diag-2x2").system;
  const auto grid = msd::TimeGrid::covering(0, 1, 1e-3);
  const auto ens = msd::simulate_fundamental(sys, grid, 20, 5, {msd::Scheme::milstein, 100});
  const auto rep = msd::decoupling_check(ens, msd::Projector(2, 1));
  EXPECT_EQ(rep.max_commutator, 0.0);
  EXPECT_LE(rep.max_similarity_residual, 1e-12);
}

TEST(Decoupling, CoupledRankOneResiduals) {
  const auto sys = LinearSde::from_strings({{"-1", "0.7"}, {"0.4", "-0.3"}}, {{"0.3", "0.2"}, {"-0.1", "0.4"}}, {});
  const auto grid = msd::TimeGrid::covering(0, 2, 1e-3);
  const auto ens = msd::simulate_fundamental(sys, grid, 400, 9, {msd::Scheme::milstein, 100});
  const auto rep = msd::decoupling_check(ens, msd::Projector(2, 1));
  EXPECT_LE(rep.max_commutator, 1e-7);
  EXPECT_LE(rep.max_similarity_residual, 1e-7);
  EXPECT_TRUE(rep.s_bound_holds);
  EXPECT_TRUE(rep.inverse_bound_holds);
  EXPECT_LE(rep.max_mean_s_norm, 2.05);
}
