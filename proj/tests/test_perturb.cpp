#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "msd/error.hpp"
#include "msd/perturb.hpp"

using msd::LinearSde;
using msd::PerturbationSpec;
using msd::PerturbedSde;
using msd::Vector;

namespace {

LinearSde contraction_base() {
  return LinearSde::from_strings({{"-1"}}, {{"0.2"}}, {});
}

// Clipped cubic used by the stability experiments.
PerturbationSpec clipped_cubic(double coefficient = 0.25) {
  return PerturbationSpec::power(coefficient, 0.0, 3.0, 1.0, 9.0, 2.0);
}

Vector scalar(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST(Condition, ZeroPerturbationIsConsistent) {
  const auto rep = msd::check_condition(PerturbationSpec::zero(), 2, {}, 0.3, 100, 1);
  EXPECT_EQ(rep.max_ratio, 0.0);
  EXPECT_TRUE(rep.consistent);
}

TEST(Condition, ClippedCubicAtSmallScale) {
  for (double scale : {0.1, 0.3}) {
    const auto rep = msd::check_condition(clipped_cubic(), 1, {}, scale, 1000, 2);
    EXPECT_LE(rep.max_ratio, 1.0) << "scale " << scale;
    EXPECT_TRUE(rep.consistent);
  }
}

TEST(Condition, FalsifierFindsViolationsForLargeCoefficient) {
  const auto rep = msd::check_condition(PerturbationSpec::power(5.0, 0.0, 3.0, 1.0, 9.0, 2.0), 1, {}, 0.3, 200, 3);
  EXPECT_GT(rep.max_ratio, 1.0);
  EXPECT_FALSE(rep.consistent);
  EXPECT_TRUE(rep.worst.contains("ratio"));
}

TEST(Condition, StructuralZeroAndTrialCount) {
  const auto bad = PerturbationSpec::expressions({msd::Expr::parse("1")}, {msd::Expr::parse("0")}, 1, 2);
  EXPECT_THROW(msd::check_condition(bad, 1, {}, 0.1, 100, 1), msd::ValidationError);
  EXPECT_THROW(msd::check_condition(clipped_cubic(), 1, {}, 0.1, 10, 1), msd::ValidationError);
}

TEST(Perturbed, ZeroPerturbationMatchesFundamental) {
  const auto base = msd::gallery("triangular-2x2").system;
  const PerturbedSde psys(base, PerturbationSpec::zero());
  Vector xi(2);
  xi << 0.7, -0.4;
  const auto grid = msd::TimeGrid::covering(0, 1, 1e-3);
  const auto ens = msd::simulate_perturbed(psys, xi, grid, 4, 9, 100);
  const auto fund = msd::simulate_fundamental(base, grid, 4, 9, {msd::Scheme::milstein, 100});
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t k = 0; k < fund.nodes(); ++k)
      EXPECT_LE((ens.u(p, k) - fund.phi(p, k) * xi).norm(), 1e-12);
}

TEST(Perturbed, ZeroStartStaysZero) {
  const PerturbedSde psys(msd::gallery("gbm").system, clipped_cubic(1.0));
  const auto ens = msd::simulate_perturbed(psys, scalar(0.0), msd::TimeGrid::covering(0, 1, 1e-2), 10, 1);
  for (std::size_t p = 0; p < 10; ++p)
    for (std::size_t k = 0; k < ens.grid.count; ++k) EXPECT_EQ(ens.u(p, k)(0), 0.0);
}

TEST(Perturbed, PerronSecondComponentGrows) {
  const auto item = msd::gallery("perron-sde-perturbed");
  const PerturbedSde psys(item.system, *item.perturbation, item.t0);
  Vector xi(2);
  xi << 1.0, 0.0;
  const auto ens = msd::simulate_perturbed(psys, xi, msd::TimeGrid::covering(1, 11, 1e-3), 200, 4, 100);
  const auto v2 = ens.component_moment(1);
  // v₂ starts at zero and is fed only through the u₁ nonlinearity.
  EXPECT_EQ(v2.front().value, 0.0);
  double peak = 0.0;
  for (const auto& p : v2) peak = std::max(peak, p.value);
  EXPECT_GT(peak, 1e-4);
  EXPECT_EQ(ens.escaped(), 0u);
}

TEST(Perturbed, EscapeIsReportedNotFatal) {
  const auto base = LinearSde::from_strings({{"0"}}, {{"0"}}, {});
  const auto spec = PerturbationSpec::expressions({msd::Expr::parse("u1^2")}, {msd::Expr::parse("0")}, 1, 2);
  const PerturbedSde psys(base, spec);
  msd::SimulationOptions o;
  o.explosion_threshold = 1e6;
  // du = u² dt from u = 1 blows up at t = 1.
  const auto ens = msd::simulate_perturbed(psys, scalar(1.0), msd::TimeGrid::covering(0, 2, 1e-3), 3, 1, 1, o);
  EXPECT_EQ(ens.escaped(), 3u);
  EXPECT_NEAR(*ens.escape_time[0], 1.0, 0.02);
  EXPECT_TRUE(std::isinf(ens.second_moment().back().value));
}

TEST(Voc, ZeroPerturbationOneIteration) {
  const auto base = msd::gallery("triangular-2x2").system;
  const PerturbedSde psys(base, PerturbationSpec::zero());
  const auto path = msd::brownian(0, 1e-3, 1000, msd::RngStream(3, 0));
  const auto fp = msd::simulate_fundamental_path(base, path);
  Vector xi(2);
  xi << 1, 2;
  const auto sol = msd::voc_solve(psys, xi, path, fp);
  EXPECT_EQ(sol.iterations, 1u);
  for (std::size_t k = 0; k < sol.u.size(); ++k) EXPECT_EQ((sol.u[k] - fp.phi[k] * xi).norm(), 0.0);
}

TEST(Voc, AgreesWithDirectSimulationAsDtShrinks) {
  const PerturbedSde psys(msd::gallery("gbm").system, clipped_cubic(1.0));
  const double xi = 0.5;
  std::vector<double> errors;
  const std::size_t finest = 1 << 14;
  for (std::size_t paths = 0; paths < 1; ++paths) {}
  double err[4] = {0, 0, 0, 0};
  const std::size_t trials = 20;
  for (std::size_t p = 0; p < trials; ++p) {
    const auto fine = msd::brownian(0, 1.0 / finest, finest, msd::RngStream(17, p));
    for (int level = 0; level < 4; ++level) {
      const auto path = fine.coarsen(std::size_t{1} << (6 - level));
      const auto fp = msd::simulate_fundamental_path(psys.base(), path);
      const auto voc = msd::voc_solve(psys, scalar(xi), path, fp);
      const auto direct = msd::simulate_perturbed_path(psys, scalar(xi), path);
      double m = 0.0;
      for (std::size_t k = 0; k < direct.size(); ++k) m = std::max(m, std::abs(voc.u[k](0) - direct[k](0)));
      err[level] += m / trials;
    }
  }
  for (int level = 0; level < 3; ++level) {
    const double ratio = err[level] / err[level + 1];
    EXPECT_GE(ratio, 1.2) << "level " << level;
    EXPECT_LE(ratio, 2.2) << "level " << level;
  }
}

TEST(Voc, UnstableNonlinearityDoesNotConverge) {
  const auto base = LinearSde::from_strings({{"0"}}, {{"0"}}, {});
  const auto spec = PerturbationSpec::expressions({msd::Expr::parse("u1^3")}, {msd::Expr::parse("0")}, 1, 2);
  const PerturbedSde psys(base, spec);
  const auto path = msd::brownian(0, 1e-2, 100, msd::RngStream(1, 0));
  const auto fp = msd::simulate_fundamental_path(base, path);
  EXPECT_THROW(msd::voc_solve(psys, scalar(5.0), path, fp), msd::NumericError);
}

TEST(Stability, ContractionWithClippedCubicPasses) {
  const PerturbedSde psys(contraction_base(), clipped_cubic(1.0));
  msd::StabilityOptions o;
  o.dt = 1e-2;
  const auto rep = msd::stability_experiment(psys, 0.01, 10.0, 2000, 5, o);
  EXPECT_NEAR(rep.base_fit.alpha, 1.96, 2 * rep.base_fit.alpha_step);
  EXPECT_TRUE(rep.hypothesis);
  EXPECT_TRUE(rep.regularity_hypothesis);
  EXPECT_LE(rep.tail_slope, -1.5);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.verdict, "PASS");
  EXPECT_TRUE(rep.control_pass);
  EXPECT_NEAR(rep.control_k_tilde, rep.base_fit.K * 1e-4, 0.2e-4);
}

TEST(Stability, HypothesisGate) {
  // Contracting on average but with slowly swinging rate, so the fitted β is too large for q = 2.
  const auto base = LinearSde::from_strings({{"-0.5 - 2 * (sin(log(t)) + cos(log(t)))"}}, {{"0"}}, {});
  const PerturbedSde psys(base, PerturbationSpec::power(0.1, 0.0, 3.0, 1.0, 1.0, 2.0));
  msd::StabilityOptions o;
  o.t0 = 1.0;
  o.dt = 1e-2;
  o.fit_span = 20.0;
  const auto rep = msd::stability_experiment(psys, 0.01, 5.0, 50, 5, o);
  EXPECT_FALSE(rep.hypothesis) << rep.base_fit.alpha << " " << rep.base_fit.beta;
  EXPECT_EQ(rep.verdict, "hypothesis not satisfied; experiment still run");
}

TEST(Perron, GrowthBoundAndConstraints) {
  EXPECT_NEAR(msd::perron_growth_bound(1.05, 1, 1, 0.01),
              -0.1 + 2 * (3 * std::cos(0.01) - 1.05) * std::exp(0.01 - std::numbers::pi), 1e-15);
  EXPECT_NEAR(msd::perron_growth_bound(1.05, 1, 1, 0.01), 0.0702149845559818, 1e-12);
  try {
    msd::perron_instability(2, 1, 1, 0.01, 100, 10, 1);
    FAIL();
  } catch (const msd::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("a < (2e^{-pi} + 1)b"), std::string::npos);
  }
  try {
    msd::perron_instability(1, 1, 1, 0.01, 100, 10, 1);
    FAIL();
  } catch (const msd::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("b < a"), std::string::npos);
  }
  EXPECT_THROW(msd::perron_instability(1.05, 1, 1, 1.0, 100, 10, 1), msd::ValidationError);
}

TEST(Perron, LogV2MatchesIndependentIntegration) {
  // RK4 on y = log I with y' = exp(φ(t) − y), started one step after t0.
  const double a = 1.05, b = 1, lam = 1, t0 = 1;
  auto phi = [&](double t) { return -(lam + 2) * b * (t * std::sin(std::log(t)) - 0.0) - lam * a * (t - t0); };
  const double peak = std::exp(2.5 * std::numbers::pi);
  const double h = 1e-3;
  double t = t0 + h;
  double y = std::log(h * (std::exp(phi(t0)) + std::exp(phi(t0 + h))) / 2);
  auto rhs = [&](double tt, double yy) { return std::exp(phi(tt) - yy); };
  while (t < peak) {
    const double step = std::min(h, peak - t);
    const double k1 = rhs(t, y), k2 = rhs(t + step / 2, y + step / 2 * k1), k3 = rhs(t + step / 2, y + step / 2 * k2),
                 k4 = rhs(t + step, y + step * k3);
    y += step / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += step;
  }
  const double log_v2 = b * peak * std::sin(std::log(peak)) - a * (peak - t0) + y;
  const auto lib = msd::perron_log_v2(a, b, lam, t0, {10.0, peak});
  EXPECT_NEAR(lib[1], log_v2, 1e-6 * std::abs(log_v2));
  EXPECT_GT(2 * lib[1] / (peak - t0), 0.05);
}

TEST(Perron, EndToEnd) {
  const auto start = std::chrono::steady_clock::now();
  const auto rep = msd::perron_instability(1.05, 1, 1, 0.01, 1e4, 1000, 7);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_NEAR(rep.growth_bound, 0.070, 5e-4);
  EXPECT_GE(rep.chi_deterministic, 0.05);
  EXPECT_GE(rep.chi_deterministic, rep.chi_deterministic_at_peak);
  EXPECT_TRUE(std::isfinite(rep.chi_stochastic));
  EXPECT_GT(rep.chi_stochastic_std_error, 0.0);
  EXPECT_LT(secs, 60.0);
}
