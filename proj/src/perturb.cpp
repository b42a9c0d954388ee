#include "msd/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "msd/error.hpp"
#include "msd/lyapunov.hpp"
#include "msd/parallel.hpp"
#include "msd/random.hpp"

namespace msd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Mixture {
  double weight;
  Vector mean1, mean2;
  double sd1, sd2;
};

Mixture draw_mixture(RngStream& rng, Eigen::Index n, double scale) {
  Mixture m{0.1 + 0.8 * rng.uniform(), Vector(n), Vector(n), 0.0, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) m.mean1(i) = 0.5 * scale * rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) m.mean2(i) = 0.5 * scale * rng.normal();
  m.sd1 = scale * (0.05 + 0.95 * rng.uniform());
  m.sd2 = scale * (0.05 + 0.95 * rng.uniform());
  return m;
}

Vector sample(RngStream& rng, const Mixture& m) {
  const bool first = rng.uniform() < m.weight;
  Vector v = first ? m.mean1 : m.mean2;
  const double sd = first ? m.sd1 : m.sd2;
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += sd * rng.normal();
  return v;
}

nlohmann::json mixture_json(const Mixture& m) {
  return {{"weight", m.weight}, {"sd1", m.sd1}, {"sd2", m.sd2},
          {"mean1_norm", m.mean1.norm()}, {"mean2_norm", m.mean2.norm()}};
}

// Linear Milstein step plus left-point nonlinear terms.
class PerturbedStepper {
 public:
  PerturbedStepper(const PerturbedSde& psys, const SimulationOptions& options)
      : eval_(psys.base()), pert_(psys.perturbation(), psys.base().params(), psys.base().dim()),
        options_(options) {
    const auto n = static_cast<Eigen::Index>(psys.base().dim());
    A_.resize(n, n);
    G_.resize(n, n);
    f_.resize(n);
    h_.resize(n);
    if (eval_.autonomous()) load(0.0);
  }

  void step(double t, double dt, double dw, Vector& u) {
    if (!eval_.autonomous()) load(t);
    const double corr = options_.scheme == Scheme::milstein ? 0.5 * (dw * dw - dt) : 0.0;
    Vector next = u + (A_ * u) * dt + (G_ * u) * dw;
    if (corr != 0.0 && eval_.has_diffusion()) next.noalias() += corr * (G2_ * u);
    if (!pert_.zero()) {
      pert_.eval(t, u, f_, h_);
      next += f_ * dt + h_ * dw;
    }
    u.swap(next);
  }

 private:
  void load(double t) {
    eval_.drift(t, A_);
    eval_.diffusion(t, G_);
    G2_ = G_ * G_;
  }

  SdeEvaluator eval_;
  PerturbationEvaluator pert_;
  SimulationOptions options_;
  Matrix A_, G_, G2_;
  Vector f_, h_;
};

MomentCurve curve_from(const PerturbedEnsemble& ens, const std::function<double(const Vector&)>& g) {
  MomentCurve curve;
  std::vector<double> vals(ens.paths);
  for (std::size_t k = 0; k < ens.grid.count; ++k) {
    bool inf = false;
    for (std::size_t p = 0; p < ens.paths; ++p) {
      const auto u = ens.u(p, k);
      if (!u.allFinite()) {
        inf = true;
        vals[p] = kInf;
      } else {
        vals[p] = g(u);
      }
    }
    MomentPoint pt;
    pt.t = ens.grid.time(k);
    if (inf) {
      pt.value = pt.log_value = kInf;
      pt.std_error = kInf;
    } else {
      const auto ms = mean_stderr(vals);
      pt.value = ms.mean;
      pt.std_error = ms.std_error;
      pt.log_value = std::log(ms.mean);
    }
    curve.push_back(pt);
  }
  return curve;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

struct CurveVerdict {
  double k_tilde = 0.0;
  double slope = 0.0;
  bool pass = false;
};

CurveVerdict judge(const MomentCurve& curve, double t0, double horizon, double alpha) {
  CurveVerdict v;
  std::vector<double> xs, ys;
  bool pass = true;
  for (const auto& pt : curve) {
    const double tau = pt.t - t0;
    if (tau <= 0.5 * horizon) {
      if (std::isfinite(pt.log_value)) v.k_tilde = std::max(v.k_tilde, std::exp(pt.log_value + alpha * tau));
      else if (pt.log_value == kInf) v.k_tilde = kInf;
    }
  }
  for (const auto& pt : curve) {
    const double tau = pt.t - t0;
    if (tau <= 0.5 * horizon) continue;
    if (!std::isfinite(pt.value)) {
      pass = false;
      continue;
    }
    if (pt.value > v.k_tilde * std::exp(-alpha * tau) + 3.0 * pt.std_error) pass = false;
    if (pt.value > 0.0) {
      xs.push_back(pt.t);
      ys.push_back(pt.log_value);
    }
  }
  v.slope = xs.size() >= 2 ? least_squares_slope(xs, ys) : 0.0;
  v.pass = pass && std::isfinite(v.k_tilde);
  return v;
}

}  // namespace

// ------------------------------------------------------------ condition check

ConditionReport check_condition(const PerturbationSpec& spec, std::size_t dim, const ParamMap& params,
                                double scale, std::size_t trials, std::uint64_t seed, double t,
                                std::size_t samples) {
  if (trials < 100) throw ValidationError("condition check needs at least 100 trials");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("sampler scale must be positive");
  if (samples < 2) throw ValidationError("condition check needs at least 2 samples per ensemble");
  if (dim == 0) throw ValidationError("dimension must be positive");
  if (spec.kind == PerturbationSpec::Kind::expr && (spec.f.size() != dim || spec.h.size() != dim))
    throw ValidationError("perturbation f and h must have one entry per state component");
  const auto n = static_cast<Eigen::Index>(dim);
  const PerturbationEvaluator pert(spec, params, dim);
  {
    Vector f, h;
    pert.eval(t, Vector::Zero(n), f, h);
    if (f.cwiseAbs().maxCoeff() != 0.0 || h.cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("perturbation must vanish at u = 0 (f(t,0) = h(t,0) = 0)");
  }
  std::vector<double> ratios(trials, 0.0);
  std::vector<nlohmann::json> details(trials);
  parallel_for(trials, [&](std::size_t trial) {
    RngStream rng(seed, (std::uint64_t{1} << 40) + trial);
    const Mixture mu = draw_mixture(rng, n, scale);
    const bool coupled = trial % 4 != 3;
    const Mixture mv = draw_mixture(rng, n, scale);
    const double eta = scale * std::exp(std::log(0.01) * rng.uniform());
    double df = 0, dh = 0, duv = 0, su = 0, sv = 0;
    Vector fu, hu, fv, hv;
    for (std::size_t i = 0; i < samples; ++i) {
      const Vector u = sample(rng, mu);
      Vector v;
      if (coupled) {
        v = u;
        for (Eigen::Index j = 0; j < n; ++j) v(j) += eta * rng.normal();
      } else {
        v = sample(rng, mv);
      }
      pert.eval(t, u, fu, hu);
      pert.eval(t, v, fv, hv);
      df += (fu - fv).squaredNorm();
      dh += (hu - hv).squaredNorm();
      duv += (u - v).squaredNorm();
      su += u.squaredNorm();
      sv += v.squaredNorm();
    }
    const double m = static_cast<double>(samples);
    const double lhs = std::max(df, dh) / m;
    const double rhs = spec.c * (duv / m) * std::pow(su / m + sv / m, spec.q);
    ratios[trial] = lhs == 0.0 ? 0.0 : (rhs > 0.0 ? lhs / rhs : kInf);
    details[trial] = {{"trial", trial}, {"coupled", coupled}, {"u", mixture_json(mu)}};
    if (coupled)
      details[trial]["eta"] = eta;
    else
      details[trial]["v"] = mixture_json(mv);
  });
  ConditionReport rep;
  rep.trials = trials;
  std::size_t worst = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (ratios[i] > 1.0) ++rep.violations;
    if (ratios[i] > ratios[worst]) worst = i;
  }
  rep.max_ratio = ratios[worst];
  rep.consistent = rep.violations == 0;
  rep.worst = details[worst];
  rep.worst["ratio"] = ratios[worst];
  rep.verdict = rep.consistent ? "consistent with the mean-square smallness condition"
                               : "violated on " + std::to_string(rep.violations) + " of " +
                                     std::to_string(trials) + " trials";
  return rep;
}

// ----------------------------------------------------------------- simulation

Eigen::Map<const Vector> PerturbedEnsemble::u(std::size_t path, std::size_t node) const {
  return Eigen::Map<const Vector>(values.data() + (path * grid.count + node) * dim,
                                  static_cast<Eigen::Index>(dim));
}

std::size_t PerturbedEnsemble::escaped() const {
  return static_cast<std::size_t>(
      std::count_if(escape_time.begin(), escape_time.end(), [](const auto& e) { return e.has_value(); }));
}

MomentCurve PerturbedEnsemble::second_moment() const {
  return curve_from(*this, [](const Vector& u) { return u.squaredNorm(); });
}

MomentCurve PerturbedEnsemble::component_moment(std::size_t i) const {
  if (i >= dim) throw ValidationError("component index out of range");
  return curve_from(*this, [i](const Vector& u) { return u(static_cast<Eigen::Index>(i)) * u(static_cast<Eigen::Index>(i)); });
}

std::vector<Vector> simulate_perturbed_path(const PerturbedSde& psys, const Vector& xi0,
                                            const BrownianPath& path, const SimulationOptions& options) {
  if (xi0.size() != static_cast<Eigen::Index>(psys.base().dim()))
    throw ValidationError("initial vector has the wrong dimension");
  PerturbedStepper stepper(psys, options);
  std::vector<Vector> out{xi0};
  Vector u = xi0;
  for (std::size_t k = 0; k < path.steps(); ++k) {
    stepper.step(path.time(k), path.dt, path.increments[k], u);
    out.push_back(u);
  }
  return out;
}

PerturbedEnsemble simulate_perturbed(const PerturbedSde& psys, const Vector& xi0, const TimeGrid& grid,
                                     std::size_t paths, std::uint64_t seed, std::size_t store_every,
                                     const SimulationOptions& options) {
  const std::size_t n = psys.base().dim();
  if (xi0.size() != static_cast<Eigen::Index>(n)) throw ValidationError("initial vector has the wrong dimension");
  if (!xi0.allFinite()) throw ValidationError("initial vector must be finite");
  if (paths == 0) throw ValidationError("need at least one path");
  const std::size_t stride = std::max<std::size_t>(store_every, 1);
  if (grid.steps() % stride != 0) throw ValidationError("storage stride must divide the number of steps");
  PerturbedEnsemble ens;
  ens.grid = TimeGrid(grid.t0, grid.dt * static_cast<double>(stride), grid.steps() / stride + 1);
  ens.paths = paths;
  ens.dim = n;
  ens.values.assign(paths * ens.grid.count * n, 0.0);
  ens.escape_time.assign(paths, std::nullopt);
  parallel_for(paths, [&](std::size_t p) {
    const BrownianPath path = brownian(grid.t0, grid.dt, grid.steps(), RngStream(seed, p));
    PerturbedStepper stepper(psys, options);
    Vector u = xi0;
    double* base = ens.values.data() + p * ens.grid.count * n;
    std::copy(u.data(), u.data() + n, base);
    bool escaped = false;
    for (std::size_t k = 0; k < path.steps(); ++k) {
      if (!escaped) {
        stepper.step(path.time(k), path.dt, path.increments[k], u);
        if (!u.allFinite() || u.cwiseAbs().maxCoeff() > options.explosion_threshold) {
          escaped = true;
          ens.escape_time[p] = path.time(k + 1);
          u.setConstant(kInf);
        }
      }
      if ((k + 1) % stride == 0) std::copy(u.data(), u.data() + n, base + ((k + 1) / stride) * n);
    }
  });
  return ens;
}

// ------------------------------------------------------- variation of constants

VocSolution voc_solve(const PerturbedSde& psys, const Vector& xi0, const BrownianPath& path,
                      const FundamentalPath& fp, const VocOptions& options) {
  const auto n = static_cast<Eigen::Index>(psys.base().dim());
  if (xi0.size() != n) throw ValidationError("initial vector has the wrong dimension");
  const std::size_t nodes = path.steps() + 1;
  if (fp.phi.size() != nodes || fp.psi.size() != nodes)
    throw ValidationError("fundamental matrices do not match the Brownian path");
  const SdeEvaluator eval(psys.base());
  const PerturbationEvaluator pert(psys.perturbation(), psys.base().params(), psys.base().dim());
  std::vector<Matrix> G(nodes, Matrix::Zero(n, n));
  for (std::size_t k = 0; k + 1 < nodes; ++k) eval.diffusion(path.time(k), G[k]);

  VocSolution sol;
  sol.u.resize(nodes);
  for (std::size_t k = 0; k < nodes; ++k) sol.u[k] = fp.phi[k] * xi0;
  Vector f, h, acc(n);
  std::vector<Vector> next(nodes);
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    acc = xi0;
    next[0] = fp.phi[0] * acc;
    double sup = 0.0, change = 0.0;
    for (std::size_t k = 0; k + 1 < nodes; ++k) {
      try {
        pert.eval(path.time(k), sol.u[k], f, h);
      } catch (const DomainError& e) {
        // The first iterate is the linear solution; later failures mean the iteration diverged.
        if (it == 1) throw;
        throw NumericError("variation-of-constants iteration diverged at iteration " + std::to_string(it) + ": " +
                           e.what());
      }
      acc += fp.psi[k] * ((f - G[k] * h) * path.dt + h * path.increments[k]);
      next[k + 1] = fp.phi[k + 1] * acc;
    }
    for (std::size_t k = 0; k < nodes; ++k) {
      if (!next[k].allFinite()) {
        throw NumericError("variation-of-constants iteration produced non-finite values at iteration " +
                           std::to_string(it));
      }
      sup = std::max(sup, next[k].norm());
      change = std::max(change, (next[k] - sol.u[k]).norm());
    }
    sol.u.swap(next);
    sol.iterations = it;
    sol.last_change = change;
    if (change <= options.tolerance * std::max(1.0, sup)) return sol;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "variation-of-constants iteration did not converge after %zu iterations (last change %.3g)",
                options.max_iterations, sol.last_change);
  throw NumericError(buf);
}

// -------------------------------------------------------- stability experiment

StabilityReport stability_experiment(const PerturbedSde& psys, double delta, double horizon,
                                     std::size_t paths, std::uint64_t seed, const StabilityOptions& o) {
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  const LinearSde& base = psys.base();
  const std::size_t n = base.dim();
  StabilityReport rep;
  rep.q = psys.perturbation().q;

  std::vector<double> s_values, offsets;
  for (int i = 0; i <= 4; ++i) s_values.push_back(o.t0 + 0.25 * o.fit_span * i);
  for (int j = 0; j <= 20; ++j) offsets.push_back(0.05 * o.fit_span * j);
  SurfaceOptions so;
  so.dt = 1e-3;
  const auto surface = dichotomy_surface(base, std::nullopt, surface_grid(s_values, offsets), so);
  rep.base_fit = fit_envelope(surface, Sense::contraction, n);
  rep.hypothesis = -rep.q * rep.base_fit.alpha + rep.base_fit.beta < 0.0;

  ChiOptions co;
  co.t0 = o.t0;
  const auto spec = spectrum(base, o.spectrum_horizon, n, co);
  rep.chi_max = spec.values.back();
  rep.gamma = regularity_estimate(base, {canonical_pair(n)}, o.spectrum_horizon, co).gamma_upper_estimate;
  rep.regularity_hypothesis = rep.q * (rep.chi_max + o.epsilon) + rep.gamma + 2.0 * o.epsilon < 0.0;

  Vector xi0 = Vector::Zero(static_cast<Eigen::Index>(n));
  xi0(0) = delta;
  const TimeGrid grid = TimeGrid::covering(o.t0, o.t0 + horizon, o.dt);
  std::size_t stride = std::max<std::size_t>(o.store_every, 1);
  while (grid.steps() % stride != 0) --stride;
  const auto ens = simulate_perturbed(psys, xi0, grid, paths, seed, stride);
  rep.escaped = ens.escaped();
  rep.curve = ens.second_moment();
  const auto v = judge(rep.curve, o.t0, horizon, rep.base_fit.alpha);
  rep.k_tilde = v.k_tilde;
  rep.tail_slope = v.slope;
  rep.pass = v.pass;

  const PerturbedSde control(base, PerturbationSpec::zero(psys.perturbation().c, rep.q), o.t0);
  const auto cens = simulate_perturbed(control, xi0, grid, paths, seed, stride);
  const auto cv = judge(cens.second_moment(), o.t0, horizon, rep.base_fit.alpha);
  rep.control_k_tilde = cv.k_tilde;
  rep.control_tail_slope = cv.slope;
  rep.control_pass = cv.pass;

  if (!rep.hypothesis)
    rep.verdict = "hypothesis not satisfied; experiment still run";
  else
    rep.verdict = rep.pass ? "PASS" : "FAIL";
  return rep;
}

// ------------------------------------------------------------ Perron example

double perron_growth_bound(double a, double b, double lambda, double delta) {
  return -2 * a + 2 * b + 2 * ((lambda + 2) * b * std::cos(delta) - lambda * a) * std::exp(delta - std::numbers::pi);
}

std::vector<double> perron_log_v2(double a, double b, double lambda, double t0, const std::vector<double>& times) {
  if (!(t0 > 0.0)) throw ValidationError("t0 must be positive (log t coefficients)");
  const double c0 = t0 * std::sin(std::log(t0));
  auto phi = [&](double tau) { return -(lambda + 2) * b * (tau * std::sin(std::log(tau)) - c0) - lambda * a * (tau - t0); };
  auto Lambda = [&](double t) { return b * (t * std::sin(std::log(t)) - c0) - a * (t - t0); };
  std::vector<double> out;
  out.reserve(times.size());
  double x = t0, log_i = -kInf;
  for (double target : times) {
    if (target < x) throw ValidationError("times must be increasing and not before t0");
    while (x < target) {
      const double y = std::min(target, x + 1.0);
      const double shift = std::max({phi(x), phi(y), phi(0.5 * (x + y))});
      const double part = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
          [&](double tau) { return std::exp(phi(tau) - shift); }, x, y, 8, 1e-10);
      const double log_part = shift + std::log(part);
      log_i = log_i == -kInf ? log_part
                             : std::max(log_i, log_part) + std::log1p(std::exp(-std::abs(log_i - log_part)));
      x = y;
    }
    out.push_back(Lambda(target) + log_i);
  }
  return out;
}

PerronReport perron_instability(double a, double b, double lambda, double delta, double horizon,
                                std::size_t paths, std::uint64_t seed, const PerronOptions& o) {
  if (const auto bad = perron_constraint_violation(a, b, lambda))
    throw ValidationError("parameter constraint violated: " + *bad);
  if (!(delta > 0.0 && delta < std::numbers::pi / 4)) throw ValidationError("delta must lie in (0, pi/4)");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  PerronReport rep;
  rep.a = a;
  rep.b = b;
  rep.lambda = lambda;
  rep.delta = delta;
  rep.horizon = horizon;
  rep.growth_bound = perron_growth_bound(a, b, lambda, delta);

  // Deterministic sub-case over one log-period window [t0 + H e^{−2π}, t0 + H].
  const double w0 = horizon * std::exp(-2 * std::numbers::pi);
  const std::size_t m = 4000;
  std::vector<double> times;
  const double peak = std::exp(2.5 * std::numbers::pi);
  for (std::size_t i = 0; i < m; ++i)
    times.push_back(o.t0 + w0 * std::pow(horizon / w0, static_cast<double>(i) / (m - 1)));
  times.back() = o.t0 + horizon;
  const bool has_peak = peak > times.front() && peak < times.back();
  if (has_peak) times.insert(std::upper_bound(times.begin(), times.end(), peak), peak);
  const auto logs = perron_log_v2(a, b, lambda, o.t0, times);
  rep.chi_deterministic = -kInf;
  const std::size_t stride = std::max<std::size_t>(1, times.size() / 400);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double chi = 2 * logs[i] / (times[i] - o.t0);
    rep.chi_deterministic = std::max(rep.chi_deterministic, chi);
    if (times[i] == peak) rep.chi_deterministic_at_peak = chi;
    if (i % stride == 0 || i + 1 == times.size()) rep.deterministic_tail.emplace_back(times[i], chi);
  }
  if (!has_peak) rep.chi_deterministic_at_peak = std::numeric_limits<double>::quiet_NaN();
  if (!(rep.chi_deterministic > 0.0))
    throw NumericError("deterministic sub-case did not show growth (chi = " +
                       std::to_string(rep.chi_deterministic) + ")");

  // Stochastic case by Monte Carlo from u₂(t0) = 1, v₂(t0) = 0.
  const auto item = gallery("perron-sde-perturbed", {{"a", a}, {"b", b}, {"lambda", lambda}});
  const PerturbedSde psys(item.system, *item.perturbation, o.t0);
  rep.stochastic_horizon = o.stochastic_horizon;
  const TimeGrid grid = TimeGrid::covering(o.t0, o.t0 + o.stochastic_horizon, o.dt);
  std::size_t store = std::max<std::size_t>(1, grid.steps() / (2 * o.checkpoints));
  while (grid.steps() % store != 0) --store;
  Vector xi0(2);
  xi0 << 1.0, 0.0;
  const auto ens = simulate_perturbed(psys, xi0, grid, paths, seed, store);
  rep.escaped = ens.escaped();
  const auto curve = ens.component_moment(1);
  rep.chi_stochastic = -kInf;
  for (const auto& pt : curve) {
    const double tau = pt.t - o.t0;
    if (tau < 0.5 * o.stochastic_horizon || tau <= 0.0) continue;
    const double chi = pt.log_value / tau;
    if (chi > rep.chi_stochastic) {
      rep.chi_stochastic = chi;
      rep.chi_stochastic_std_error = std::isfinite(pt.value) ? pt.std_error / (pt.value * tau) : kInf;
    }
  }
  return rep;
}

// ----------------------------------------------------------------------- JSON

nlohmann::json stability_to_json(const StabilityReport& r) {
  return {{"base_fit", fit_to_json(r.base_fit)},
          {"q", r.q},
          {"hypothesis", r.hypothesis},
          {"chi_max", r.chi_max},
          {"gamma", r.gamma},
          {"regularity_hypothesis", r.regularity_hypothesis},
          {"k_tilde", r.k_tilde},
          {"tail_slope", r.tail_slope},
          {"pass", r.pass},
          {"escaped", r.escaped},
          {"verdict", r.verdict},
          {"control", {{"k_tilde", r.control_k_tilde}, {"tail_slope", r.control_tail_slope}, {"pass", r.control_pass}}}};
}

nlohmann::json perron_to_json(const PerronReport& r) {
  nlohmann::json j{{"a", r.a},
                   {"b", r.b},
                   {"lambda", r.lambda},
                   {"delta", r.delta},
                   {"constraints", "satisfied"},
                   {"growth_bound", r.growth_bound},
                   {"horizon", r.horizon},
                   {"chi_deterministic", r.chi_deterministic},
                   {"chi_stochastic", r.chi_stochastic},
                   {"chi_stochastic_std_error", r.chi_stochastic_std_error},
                   {"stochastic_horizon", r.stochastic_horizon},
                   {"escaped", r.escaped}};
  j["chi_deterministic_at_peak"] =
      std::isfinite(r.chi_deterministic_at_peak) ? nlohmann::json(r.chi_deterministic_at_peak) : nlohmann::json(nullptr);
  return j;
}

}  // namespace msd
