#include "msd/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <limits>
#include <numbers>

#include "msd/bounds.hpp"
#include "msd/dichotomy.hpp"
#include "msd/engines.hpp"
#include "msd/error.hpp"
#include "msd/io.hpp"
#include "msd/lyapunov.hpp"
#include "msd/parallel.hpp"
#include "msd/perturb.hpp"

namespace msd {

namespace {

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records one named check; the detail keeps the measured value either way.
  void check(bool ok, const std::string& text) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += text;
    if (!ok) detail += " [fail]";
  }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

LinearSde scalar_system(double a, double b) {
  return LinearSde::from_strings({{"a"}}, {{"b"}}, {{"a", a}, {"b", b}});
}

MomentSurface synthetic_surface(double alpha, double beta, double scale) {
  MomentSurface surf;
  surf.method = "synthetic";
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const double s = 0.5 * i, t = s + 0.5 * j;
      surf.points.push_back({s, t, scale * std::exp(-alpha * (t - s) + beta * s), 0.0, true});
    }
  return surf;
}

// Largest relative excess of a surface over a fitted bound (≤ 0 when the envelope holds).
double envelope_excess(const MomentSurface& surf, const DichotomyFit& fit) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& p : surf.points) {
    if (p.t < p.s) continue;
    worst = std::max(worst, p.log_moment() - std::log(fit.bound(p.s, p.t)));
  }
  return worst;
}

// ------------------------------------------------------------------ criteria

Outcome scalar_moment_oracle(std::uint64_t) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  const auto res = moment_ode(scalar_system(-1.0, 0.5), Matrix::Ones(1, 1), 0.0, 1.0, 1e-3);
  const double secs = seconds_since(start);
  const double exact = std::exp(-1.75);
  const double rel = std::fabs(res.curve.back().value - exact) / exact;
  out.check(rel <= 1e-6, format("relative error %.2e (tol 1e-6)", rel));
  out.check(secs < 0.1, "runtime under 0.1 s");
  return out;
}

Outcome engine_triangle(std::uint64_t seed) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  for (const char* name : {"gbm", "triangular-2x2"}) {
    const auto sys = gallery(name).system;
    const auto ens = simulate_fundamental(sys, TimeGrid(0.0, 1e-3, 1001), 10000, seed, {Scheme::milstein, 1000});
    const auto e = mc_second_moment(ens, 0, ens.nodes() - 1, std::nullopt, InverseSide::none);
    const double exact = transition_second_moment(sys, 0.0, 1.0);
    const double z = std::fabs(e.value - exact) / e.std_error;
    out.check(z <= 3.0, format("%s MC %.6f vs exact %.6f (%.2f stderr, tol 3)", name, e.value, exact, z));
  }

  // Pathwise: triangular closed form against the simulated fundamental matrix
  // on shared increments, as the step halves.
  const auto tri = gallery("triangular-2x2").system;
  const std::size_t fine_steps = 4096, paths = 100;
  std::vector<double> errors;
  for (std::size_t factor : {16u, 8u, 4u, 2u}) {
    std::vector<double> per_path(paths);
    parallel_for(paths, [&](std::size_t p) {
      const auto path = brownian(0.0, 1.0 / fine_steps, fine_steps, RngStream(seed, 0x7a000000 + p)).coarsen(factor);
      const auto closed = triangular_fundamental(tri, path);
      const auto sim = simulate_fundamental_path(tri, path);
      double err = 0.0;
      for (std::size_t k = 0; k <= path.steps(); ++k) err = std::max(err, (closed.U[k] - sim.phi[k]).norm());
      per_path[p] = err;
    });
    errors.push_back(pairwise_sum(per_path) / static_cast<double>(paths));
  }
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double ratio = errors[i - 1] / errors[i];
    out.check(ratio >= 1.2 && ratio <= 2.2, format("halving ratio %.3f (in [1.2, 2.2])", ratio));
  }
  out.check(seconds_since(start) < 30.0, "runtime under 30 s");
  return out;
}

Outcome lyapunov_exponents(std::uint64_t) {
  Outcome out;
  for (const auto& [a, b] : {std::pair{-1.0, 0.5}, std::pair{0.3, 0.8}, std::pair{-0.2, 0.0}}) {
    const double chi = chi_estimate(scalar_system(a, b), Vector::Ones(1), 50.0).chi;
    const double expected = 2 * a + b * b;
    out.check(std::fabs(chi - expected) <= 0.01, format("chi(a=%g, b=%g) = %.5f vs %.5f (tol 0.01)", a, b, chi, expected));
  }
  const auto diag = LinearSde::from_strings({{"-1", "0"}, {"0", "-2"}}, {{"0", "0"}, {"0", "0"}}, {});
  const auto spec = spectrum(diag, 50.0, 6);
  const bool two = spec.values.size() == 2;
  out.check(two, format("%zu distinct exponents (want 2)", spec.values.size()));
  if (two) {
    out.check(std::fabs(spec.values[0] + 4.0) <= 0.05 && std::fabs(spec.values[1] + 2.0) <= 0.05,
              format("spectrum {%.4f, %.4f} vs {-4, -2} (tol 0.05)", spec.values[0], spec.values[1]));
    out.check(spec.multiplicities[0] == 1 && spec.multiplicities[1] == 1, "multiplicities {1, 1}");
  }
  return out;
}

Outcome duality(std::uint64_t seed) {
  Outcome out;
  DualityOptions d;
  d.seed = seed;
  const auto g = duality_defect(scalar_system(-1.0, 0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 50.0, {}, d);
  out.check(std::fabs(g.sums[0] - 1.0) <= 0.02, format("gbm sum %.5f vs 4b^2 = 1 (tol 0.02)", g.sums[0]));
  out.check(g.pathwise_drift <= 0.01, format("gbm drift %.2e (tol 0.01)", g.pathwise_drift));
  Matrix B(2, 2);
  B << 1, 1, 0, 1;
  const Matrix D = B.inverse().transpose();
  const auto t = duality_defect(gallery("triangular-2x2").system, B, D, 30.0, {}, d);
  const double min_sum = *std::min_element(t.sums.begin(), t.sums.end());
  out.check(min_sum >= -0.05, format("triangular-2x2 smallest sum %.5f (>= -0.05)", min_sum));
  out.check(t.pathwise_drift <= 0.01, format("triangular-2x2 drift %.2e (tol 0.01)", t.pathwise_drift));
  return out;
}

Outcome lower_bound_check(std::uint64_t) {
  Outcome out;
  AverageOptions o;
  o.t0 = 1.0;
  const auto start = std::chrono::steady_clock::now();
  const auto osc = LinearSde::from_strings({{"-1 - (sin(log(t)) + cos(log(t)))"}}, {{"0"}}, {});
  const double lb = lower_bound(osc, 1e6, o);
  const double secs = seconds_since(start);
  out.check(std::fabs(lb - 4.0) <= 0.2, format("log oscillator %.4f vs 4 (tol 0.2)", lb));
  out.check(secs < 5.0, "quadrature under 5 s");
  const auto item = gallery("perron-sde");
  o.t0 = item.t0;
  const double trace_bound = lower_bound(item.system, 1e6, o);
  out.check(std::fabs(trace_bound) <= 0.05, format("perron-sde trace bound %.4f vs 0 (tol 0.05)", trace_bound));
  return out;
}

Outcome upper_bound_check(std::uint64_t) {
  Outcome out;
  const auto item = gallery("perron-sde");
  AverageOptions o;
  o.t0 = item.t0;
  const double ub = upper_bound(item.system, 1e6, o);
  out.check(std::fabs(ub - 8.0) <= 0.3, format("perron-sde %.4f vs 8 (tol 0.3)", ub));
  for (const char* name : {"gbm", "triangular-2x2", "diag-2x2"}) {
    const double c = upper_bound(gallery(name).system, 1e3);
    out.check(c == 0.0, format("%s %.17g (exactly 0)", name, c));
  }
  return out;
}

double bounds_horizon(const std::string& name) {
  if (name.rfind("perron-sde", 0) == 0) return 1e6;
  if (name == "perron-ode") return 1e3;
  return 1e2;
}

Outcome bound_sandwich(std::uint64_t) {
  Outcome out;
  for (const auto name : gallery_names()) {
    const auto item = gallery(name);
    AverageOptions o;
    o.t0 = item.t0;
    const auto avg = diagonal_averages(item.system, bounds_horizon(item.name), o);
    const double lb = lower_bound(avg), ub = upper_bound(avg);
    ChiOptions co;
    co.t0 = item.t0;
    const double gamma = regularity_estimate(item.system, {canonical_pair(item.system.dim())}, 100.0, co)
                             .gamma_upper_estimate;
    out.check(lb <= ub + 0.3 && gamma >= lb - 0.3 && gamma >= -0.05,
              format("%s lower %.3f upper %.3f gamma %.3f", item.name.c_str(), lb, ub, gamma));
  }
  return out;
}

Outcome triangularization(std::uint64_t seed) {
  Outcome out;
  const auto sys = LinearSde::from_strings(
      {{"-1", "0.5*sin(t)", "0.2"}, {"0.3", "-0.5", "0.1*t"}, {"-0.4", "0.2", "-1.5"}},
      {{"0.3", "0.1", "0"}, {"0", "0.2", "0.1"}, {"0.1", "0", "0.4"}}, {});
  // 10 paths × 10 stored nodes after the start.
  const auto ens = simulate_fundamental(sys, TimeGrid::covering(0.0, 1.0, 1e-3), 10, seed, {Scheme::milstein, 100});
  const auto res = triangularize_paths(ens);
  const auto inv = unitary_invariance_check(ens, res);
  out.check(res.max_unitarity_defect <= 1e-8, format("unitarity %.2e (tol 1e-8)", res.max_unitarity_defect));
  out.check(res.max_lower_entry <= 1e-8, format("lower entries %.2e (tol 1e-8)", res.max_lower_entry));
  out.check(res.max_relative_residual <= 1e-6, format("SX - U relative %.2e (tol 1e-6)", res.max_relative_residual));
  out.check(inv.max_norm_discrepancy <= 1e-8, format("norm invariance %.2e (tol 1e-8)", inv.max_norm_discrepancy));
  out.check(ens.paths() * (ens.nodes() - 1) >= 100, format("%zu nodes", ens.paths() * (ens.nodes() - 1)));
  return out;
}

Outcome dichotomy_fitting(std::uint64_t) {
  Outcome out;
  const auto flat = synthetic_surface(2.0, 0.0, 1.0);
  const auto f0 = fit_envelope(flat, Sense::stable);
  out.check(std::fabs(f0.K - 1.0) <= 1e-6 && std::fabs(f0.alpha - 2.0) <= f0.alpha_step && f0.beta == 0.0,
            format("(K, alpha, beta) = (%.6f, %.4f, %.4f) vs (1, 2, 0)", f0.K, f0.alpha, f0.beta));
  const auto tilted = synthetic_surface(2.0, 0.5, 1.0);
  const auto f1 = fit_envelope(tilted, Sense::stable);
  out.check(std::fabs(f1.alpha - 2.0) <= f1.alpha_step && std::fabs(f1.beta - 0.5) <= f1.beta_step &&
                std::fabs(std::log(f1.K)) <= 4.5 * (f1.alpha_step + f1.beta_step),
            format("(K, alpha, beta) = (%.4f, %.4f, %.4f) vs (1, 2, 0.5)", f1.K, f1.alpha, f1.beta));
  const double excess = std::max(envelope_excess(flat, f0), envelope_excess(tilted, f1));
  out.check(excess <= 1e-9, format("envelope excess %.2e (tol 1e-9)", excess));
  const auto a = fit_envelope(synthetic_surface(1.3, 0.2, 1.0), Sense::stable);
  const auto b = fit_envelope(synthetic_surface(1.3, 0.2, 7.5), Sense::stable);
  const double drift = std::max({std::fabs(a.alpha - b.alpha), std::fabs(a.beta - b.beta),
                                 std::fabs(b.K / a.K - 7.5) / 7.5});
  out.check(drift <= 1e-12, format("scale equivariance defect %.2e (tol 1e-12)", drift));
  return out;
}

Outcome nonuniformity(std::uint64_t) {
  Outcome out;
  const auto sys = gallery("perron-ode").system;
  std::vector<double> s_values, offsets;
  for (int i = 0; i <= 9; ++i) s_values.push_back(0.5 + 0.5 * i);
  for (int j = 0; j <= 100; ++j) offsets.push_back(j);
  SurfaceOptions o;
  o.dt = 1e-2;
  const auto surf = dichotomy_surface(sys, Projector(2, 1), surface_grid(s_values, offsets), o);
  const auto fit = fit_envelope(surf, Sense::stable, 1);
  const auto w = uniform_witness(surf, fit.alpha);
  out.check(w.growth_ratio > 1e3, format("growth ratio %.3e (> 1e3)", w.growth_ratio));
  out.check(w.flag == "nonuniform", "flag " + w.flag);
  return out;
}

Outcome similarity(std::uint64_t) {
  Outcome out;
  DichotomyFit fit;
  fit.K = 1;
  fit.alpha = 2;
  fit.beta = 0.5;
  const auto p = similarity_propagate(fit, 2.0);
  out.check(p.K == 4.0 && p.alpha == 1.5 && p.beta == 1.5,
            format("(1, 2, 0.5) with M = 2 -> (%g, %g, %g)", p.K, p.alpha, p.beta));
  const auto same = similarity_propagate(fit, 1.0, 0.0);
  out.check(same.K == 1.0 && same.alpha == 2.0 && same.beta == 0.5, "identity case unchanged");
  DichotomyFit bad;
  bad.alpha = 1.0;
  bad.beta = 1.5;
  bool rejected = false;
  try {
    similarity_propagate(bad, 1.0);
  } catch (const ValidationError&) {
    rejected = true;
  }
  out.check(rejected, "beta >= alpha rejected");
  return out;
}

Outcome decoupling(std::uint64_t seed) {
  Outcome out;
  const auto sys = LinearSde::from_strings({{"-1", "0.7"}, {"0.4", "-0.3"}}, {{"0.3", "0.2"}, {"-0.1", "0.4"}}, {});
  const auto ens = simulate_fundamental(sys, TimeGrid::covering(0.0, 2.0, 1e-3), 400, seed, {Scheme::milstein, 100});
  const auto rep = decoupling_check(ens, Projector(2, 1));
  out.check(rep.max_commutator <= 1e-7, format("commutator %.2e (tol 1e-7)", rep.max_commutator));
  out.check(rep.max_similarity_residual <= 1e-7, format("similarity %.2e (tol 1e-7)", rep.max_similarity_residual));
  out.check(rep.max_mean_s_norm <= 2.05, format("max mean |S|^2 %.4f (<= 2.05)", rep.max_mean_s_norm));
  return out;
}

Outcome perturbation_stability(std::uint64_t seed) {
  Outcome out;
  const PerturbedSde psys(LinearSde::from_strings({{"-1"}}, {{"0.2"}}, {}),
                          PerturbationSpec::power(1.0, 0.0, 3.0, 1.0, 9.0, 2.0));
  const auto rep = stability_experiment(psys, 0.01, 10.0, 2000, seed);
  out.check(rep.tail_slope <= -1.5, format("tail slope %.4f (<= -1.5)", rep.tail_slope));
  out.check(rep.pass, format("curve under K~e^{-alpha t} with K~ = %.4e, alpha = %.4f", rep.k_tilde, rep.base_fit.alpha));
  out.check(rep.control_pass, format("zero-perturbation control slope %.4f", rep.control_tail_slope));
  out.check(rep.escaped == 0, format("%zu escaped paths", rep.escaped));
  return out;
}

Outcome perron_example(std::uint64_t seed) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  out.check(!perron_constraint_violation(1.05, 1.0, 1.0), "constraints hold for (1.05, 1, 1)");
  const auto rep = perron_instability(1.05, 1.0, 1.0, 0.01, 1e4, 1000, seed);
  const double secs = seconds_since(start);
  out.check(std::fabs(rep.growth_bound - 0.070) <= 5e-4, format("growth bound %.6f (~0.070)", rep.growth_bound));
  out.check(rep.chi_deterministic >= 0.05, format("deterministic chi %.4f (>= 0.05)", rep.chi_deterministic));
  out.check(std::isfinite(rep.chi_stochastic) && rep.chi_stochastic_std_error > 0.0,
            format("stochastic chi %.4f +- %.4f", rep.chi_stochastic, rep.chi_stochastic_std_error));
  out.check(secs < 60.0, "runtime under 60 s");
  return out;
}

Outcome determinism(std::uint64_t seed) {
  Outcome out;
  const std::size_t saved = thread_count();
  set_thread_count(1);
  const std::string one = determinism_fingerprint(seed);
  set_thread_count(8);
  const std::string eight = determinism_fingerprint(seed);
  set_thread_count(saved);
  out.check(one == eight, format("Monte Carlo outputs with 1 and 8 workers identical (%zu bytes)", one.size()));
  return out;
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)(std::uint64_t);
};

constexpr Criterion kCriteria[] = {
    {1, "scalar moment oracle", scalar_moment_oracle},
    {2, "engine triangle", engine_triangle},
    {3, "Lyapunov exponents", lyapunov_exponents},
    {4, "duality", duality},
    {5, "regularity lower bound", lower_bound_check},
    {6, "regularity upper bound", upper_bound_check},
    {7, "bound sandwich", bound_sandwich},
    {8, "triangularization", triangularization},
    {9, "dichotomy fitting", dichotomy_fitting},
    {10, "nonuniformity witness", nonuniformity},
    {11, "similarity propagation", similarity},
    {12, "decoupling", decoupling},
    {13, "perturbation stability", perturbation_stability},
    {14, "perturbed instability example", perron_example},
    {15, "determinism", determinism},
};

}  // namespace

std::string determinism_fingerprint(std::uint64_t seed) {
  std::string out;
  const auto gbm = gallery("gbm").system;
  out += curve_to_csv(mc_moment_curve(gbm, Vector::Ones(1), TimeGrid(0.0, 1e-3, 1001), 2000, seed, 100));
  const auto tri = gallery("triangular-2x2").system;
  const auto ens = simulate_fundamental(tri, TimeGrid(0.0, 1e-3, 1001), 500, seed, {Scheme::milstein, 250});
  for (std::size_t k = 1; k < ens.nodes(); ++k) {
    const auto e = mc_second_moment(ens, 0, k);
    out += format_number(e.value) + ',' + format_number(e.std_error) + '\n';
  }
  const auto item = gallery("perron-sde-perturbed");
  const PerturbedSde psys(item.system, *item.perturbation, item.t0);
  Vector xi(2);
  xi << 1.0, 0.0;
  out += curve_to_csv(simulate_perturbed(psys, xi, TimeGrid::covering(1.0, 2.0, 1e-3), 500, seed, 100).component_moment(1));
  ChiOptions co;
  co.seed = seed;
  for (double v : spectrum(gallery("diag-2x2").system, 10.0, 8, co).random_chi) out += format_number(v) + '\n';
  return out;
}

std::string format_result(const CriterionResult& r) {
  return format("criterion %2d  %s  %s: ", r.id, r.pass ? "PASS" : "FAIL", r.title.c_str()) + r.detail;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  std::vector<CriterionResult> results;
  for (const auto& c : kCriteria) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), c.id) == options.only.end())
      continue;
    CriterionResult r;
    r.id = c.id;
    r.title = c.title;
    const auto start = std::chrono::steady_clock::now();
    try {
      const Outcome o = c.run(options.seed);
      r.pass = o.pass;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = seconds_since(start);
    if (options.on_result) options.on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace msd
