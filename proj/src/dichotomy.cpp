#include "msd/dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "msd/error.hpp"
#include "msd/linalg.hpp"
#include "msd/parallel.hpp"

namespace msd {

namespace {

bool conformal(const LinearSde& sys, const std::optional<Projector>& projector, double t0, double t1) {
  return !projector || projector->trivial() || is_block_diagonal(sys, projector->rank(), t0, t1);
}

// One moment ODE per start time: forward from s for t > s, adjoint from t for
// t < s. `values[i]` receives the trace at the matching record time.
void surface_by_ode(const LinearSde& sys, const std::optional<Projector>& projector,
                    const std::vector<std::pair<double, double>>& pairs, double dt,
                    std::vector<SurfacePoint>& out) {
  const auto n = static_cast<Eigen::Index>(sys.dim());
  const Matrix forward_start = projector ? projector->matrix() : Matrix::Identity(n, n);
  const Matrix backward_start = projector ? projector->complement() : Matrix::Identity(n, n);
  // start time -> indices of pairs, separately for each direction
  std::map<double, std::vector<std::size_t>> forward, backward;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [s, t] = pairs[i];
    out[i] = {s, t, 0.0, 0.0, true};
    if (t > s)
      forward[s].push_back(i);
    else if (t < s)
      backward[t].push_back(i);
    else {
      out[i].value = (t >= s ? forward_start : backward_start).trace();
      out[i].log_value = std::log(out[i].value);
    }
  }
  std::vector<std::pair<bool, std::pair<double, std::vector<std::size_t>>>> jobs;
  for (auto& [s, idx] : forward) jobs.push_back({true, {s, idx}});
  for (auto& [t, idx] : backward) jobs.push_back({false, {t, idx}});
  const LinearSde adj = backward.empty() ? sys : adjoint(sys);
  parallel_for(jobs.size(), [&](std::size_t j) {
    const bool fwd = jobs[j].first;
    const double start = jobs[j].second.first;
    const auto& idx = jobs[j].second.second;
    std::vector<double> targets;
    for (std::size_t i : idx) targets.push_back(fwd ? pairs[i].second : pairs[i].first);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    const auto res = moment_ode(fwd ? sys : adj, fwd ? forward_start : backward_start, start,
                                targets.back(), dt, targets);
    for (std::size_t i : idx) {
      const double target = fwd ? pairs[i].second : pairs[i].first;
      const auto it = std::min_element(res.curve.begin(), res.curve.end(), [&](const auto& a, const auto& b) {
        return std::abs(a.t - target) < std::abs(b.t - target);
      });
      out[i].value = it->value;
      out[i].log_value = it->log_value;
    }
  });
}

void surface_by_mc(const LinearSde& sys, const std::optional<Projector>& projector,
                   const std::vector<std::pair<double, double>>& pairs, const SurfaceOptions& o,
                   std::vector<SurfacePoint>& out) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [s, t] : pairs) {
    lo = std::min({lo, s, t});
    hi = std::max({hi, s, t});
  }
  const double spacing = o.node_spacing > 0.0 ? o.node_spacing : o.dt;
  const double ratio = spacing / o.dt;
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw ValidationError("node spacing must be a multiple of dt");
  auto node_of = [&](double x) {
    const double r = (x - lo) / spacing;
    const auto k = static_cast<std::size_t>(std::llround(r));
    if (std::abs(r - static_cast<double>(k)) > 1e-6)
      throw ValidationError("surface time " + std::to_string(x) +
                            " is not on the Monte Carlo node grid (spacing " + std::to_string(spacing) + ")");
    return k;
  };
  const std::size_t last = std::max<std::size_t>(node_of(hi), 1);
  const TimeGrid grid(lo, o.dt, last * stride + 1);
  const auto ens = simulate_fundamental(sys, grid, o.paths, o.seed, {Scheme::milstein, stride});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [s, t] = pairs[i];
    const auto est = mc_second_moment(ens, node_of(s), node_of(t), projector);
    out[i] = {s, t, est.value, est.std_error, false, std::log(est.value)};
  }
}

}  // namespace

std::vector<std::pair<double, double>> surface_grid(const std::vector<double>& s_values,
                                                    const std::vector<double>& offsets) {
  std::vector<std::pair<double, double>> pairs;
  for (double s : s_values)
    for (double tau : offsets) pairs.emplace_back(s, s + tau);
  return pairs;
}

MomentSurface dichotomy_surface(const LinearSde& sys, const std::optional<Projector>& projector,
                                const std::vector<std::pair<double, double>>& pairs,
                                const SurfaceOptions& o) {
  if (pairs.empty()) throw ValidationError("surface grid is empty");
  if (projector && projector->dim() != sys.dim()) throw ValidationError("projector dimension mismatch");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [s, t] : pairs) {
    if (!std::isfinite(s) || !std::isfinite(t)) throw ValidationError("surface times must be finite");
    lo = std::min({lo, s, t});
    hi = std::max({hi, s, t});
  }
  SurfaceMethod method = o.method;
  if (method == SurfaceMethod::automatic)
    method = conformal(sys, projector, lo, hi) ? SurfaceMethod::ode : SurfaceMethod::mc;
  if (method == SurfaceMethod::ode && !conformal(sys, projector, lo, hi))
    throw ValidationError("projector is not conformal with a block-diagonal system; use Monte Carlo");
  MomentSurface surface;
  surface.points.resize(pairs.size());
  if (method == SurfaceMethod::ode) {
    surface.method = "ode";
    surface_by_ode(sys, projector, pairs, o.dt, surface.points);
  } else {
    surface.method = "mc";
    surface_by_mc(sys, projector, pairs, o, surface.points);
  }
  return surface;
}

double DichotomyFit::bound(double s, double t) const {
  return std::exp(log_K - alpha * std::abs(t - s) + beta * s);
}

const char* sense_name(Sense sense) {
  switch (sense) {
    case Sense::stable: return "stable";
    case Sense::unstable: return "unstable";
    case Sense::contraction: return "contraction";
  }
  return "stable";
}

DichotomyFit fit_envelope(const MomentSurface& surface, Sense sense, std::size_t rank,
                          const FitOptions& o) {
  struct P {
    double s, tau, logv, value, t;
  };
  std::vector<P> pts;
  bool any_positive = false;
  for (const auto& p : surface.points) {
    const bool keep = sense == Sense::unstable ? p.t <= p.s : p.t >= p.s;
    if (!keep) continue;
    if (!(p.value >= 0.0)) throw ValidationError("surface values must be nonnegative");
    const double logv = p.log_moment();
    if (std::isnan(logv) || logv == std::numeric_limits<double>::infinity())
      throw ValidationError("surface values must be finite");
    if (logv == -std::numeric_limits<double>::infinity()) continue;  // zero imposes no constraint
    any_positive = true;
    pts.push_back({p.s, std::abs(p.t - p.s), logv, p.value, p.t});
  }
  if (!any_positive) throw ValidationError("surface has no positive values for this sense");
  if (pts.size() < 3) throw ValidationError("envelope fit needs at least 3 surface points");
  if (o.alpha_steps == 0) throw ValidationError("alpha lattice must have at least one step");

  // α_max: steepest decay relative to the smallest offset at the same s.
  std::map<double, std::vector<std::size_t>> by_s;
  for (std::size_t i = 0; i < pts.size(); ++i) by_s[pts[i].s].push_back(i);
  double alpha_max = 0.0;
  for (const auto& [s, idx] : by_s) {
    const std::size_t ref = *std::min_element(idx.begin(), idx.end(),
                                              [&](std::size_t a, std::size_t b) { return pts[a].tau < pts[b].tau; });
    for (std::size_t i : idx)
      if (pts[i].tau > pts[ref].tau)
        alpha_max = std::max(alpha_max, (pts[ref].logv - pts[i].logv) / (pts[i].tau - pts[ref].tau));
  }
  if (!(alpha_max > 0.0)) throw ValidationError("surface shows no decay in |t - s|; no fit with alpha > 0");
  // β_max(α): steepest growth in s of log v + α|t − s| relative to the
  // envelope at the smallest s. Beyond it only the s_min factor of K changes.
  const double s_min = by_s.begin()->first;
  auto beta_cap = [&](double alpha) {
    double c_min = -std::numeric_limits<double>::infinity();
    for (std::size_t i : by_s.begin()->second) c_min = std::max(c_min, pts[i].logv + alpha * pts[i].tau);
    double cap = 0.0;
    for (const auto& p : pts)
      if (p.s > s_min) cap = std::max(cap, (p.logv + alpha * p.tau - c_min) / (p.s - s_min));
    return cap;
  };

  const std::size_t na = o.alpha_steps;
  const double astep = alpha_max / static_cast<double>(na);
  struct Best {
    double objective = std::numeric_limits<double>::infinity();
    double logK = 0.0;
    double beta = 0.0;
    double beta_max = 0.0;
    double beta_step = 0.0;
  };
  std::vector<Best> rows(na);
  parallel_for(na, [&](std::size_t r) {
    const double alpha = astep * static_cast<double>(r + 1);
    const double bmax = beta_cap(alpha);
    const std::size_t nb = bmax > 0.0 ? o.beta_steps : 0;
    const double bstep = nb > 0 ? bmax / static_cast<double>(nb) : 0.0;
    Best best;
    for (std::size_t j = 0; j <= nb; ++j) {
      const double beta = bstep * static_cast<double>(j);
      double logK = -std::numeric_limits<double>::infinity();
      for (const auto& p : pts) logK = std::max(logK, p.logv + alpha * p.tau - beta * p.s);
      const double obj = logK + o.beta_weight * beta - o.alpha_weight * alpha;
      if (obj < best.objective) best = {obj, logK, beta, bmax, bstep};
    }
    rows[r] = best;
  });
  std::size_t best_row = 0;
  for (std::size_t r = 1; r < na; ++r)
    if (rows[r].objective < rows[best_row].objective) best_row = r;

  DichotomyFit fit;
  fit.rank = rank;
  fit.sense = sense;
  fit.alpha = astep * static_cast<double>(best_row + 1);
  fit.beta = rows[best_row].beta;
  fit.log_K = rows[best_row].logK;
  fit.K = std::exp(fit.log_K);
  fit.alpha_max = alpha_max;
  fit.beta_max = rows[best_row].beta_max;
  fit.alpha_step = astep;
  fit.beta_step = rows[best_row].beta_step;
  fit.uniform = fit.beta < 1e-6;
  fit.residual_max = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    // ratio in log space keeps the check meaningful when K overflows
    const double log_ratio = p.logv - (rows[best_row].logK - fit.alpha * p.tau + fit.beta * p.s);
    const double ratio = std::exp(log_ratio);
    fit.residual_max = std::max(fit.residual_max, ratio - 1.0);
    if (ratio >= o.tight_ratio) fit.tight_points.emplace_back(p.s, p.t);
  }
  if (fit.residual_max > 1e-9)
    throw NumericError("envelope property violated by the fitted parameters (excess " +
                       std::to_string(fit.residual_max) + ")");
  return fit;
}

UniformWitness uniform_witness(const MomentSurface& surface, double alpha) {
  std::map<double, double> ku;
  for (const auto& p : surface.points) {
    const double logv = p.log_moment();
    if (!std::isfinite(logv)) continue;
    const double v = std::exp(logv + alpha * std::abs(p.t - p.s));
    auto [it, inserted] = ku.emplace(p.s, v);
    if (!inserted) it->second = std::max(it->second, v);
  }
  if (ku.size() < 2) throw ValidationError("uniform witness needs a surface spanning several s values");
  UniformWitness w;
  w.alpha = alpha;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& [s, k] : ku) {
    w.k_uniform.emplace_back(s, k);
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  w.growth_ratio = hi / lo;
  w.flag = w.growth_ratio > 1e3 ? "nonuniform" : "uniform";
  return w;
}

ExponentPrediction predicted_exponent(const SpectrumEstimate& spec, double epsilon, bool contraction,
                                      std::optional<double> gamma) {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be nonnegative");
  if (spec.values.empty()) throw ValidationError("empty spectrum");
  ExponentPrediction out;
  out.k = spec.split;
  if (contraction) {
    if (spec.split != spec.values.size())
      throw ValidationError("contraction prediction needs an all-negative spectrum");
    out.alpha = -(spec.values.back() + epsilon);
    out.alpha_min_gap = out.alpha;
  } else {
    if (spec.split == 0 || spec.split >= spec.values.size())
      throw ValidationError("dichotomy prediction needs both negative and nonnegative exponents");
    const double below = -(spec.values[spec.split - 1] + epsilon);
    const double above = spec.values[spec.split] + epsilon;
    out.alpha = std::max(below, above);
    out.alpha_min_gap = std::min(below, above);
  }
  if (gamma) out.beta = *gamma + 2.0 * epsilon;
  return out;
}

DichotomyFit similarity_propagate(const DichotomyFit& fit, double M, std::optional<double> beta_s) {
  if (!(M >= 1.0)) throw ValidationError("similarity constant M must be at least 1");
  const double bs = beta_s.value_or(fit.beta);
  if (!(bs >= 0.0)) throw ValidationError("beta_S must be nonnegative");
  if (!(fit.alpha - bs > 0.0)) throw ValidationError("beta in [0, alpha) violated: alpha - beta_S <= 0");
  DichotomyFit out = fit;
  out.K = fit.K * M * M;
  out.log_K = fit.log_K + 2.0 * std::log(M);
  out.alpha = fit.alpha - bs;
  out.beta = fit.beta + 2.0 * bs;
  out.uniform = out.beta < 1e-6;
  out.tight_points.clear();
  return out;
}

DecouplingReport decoupling_check(const FundamentalEnsemble& ens, const Projector& projector) {
  if (projector.dim() != ens.dim()) throw ValidationError("projector dimension mismatch");
  const Matrix P = projector.matrix(), Q = projector.complement();
  const std::size_t paths = ens.paths(), nodes = ens.nodes();
  std::vector<double> s_norm(paths * nodes), s_inv(paths * nodes), p_norm(paths * nodes), q_norm(paths * nodes);
  std::vector<double> comm(paths, 0.0), sim(paths, 0.0);
  parallel_for(paths, [&](std::size_t p) {
    for (std::size_t k = 0; k < nodes; ++k) {
      const Matrix phi = ens.phi(p, k);
      const Matrix R = spd_sqrt_commuting(phi.transpose() * phi, projector);
      const Matrix R_inv = R.inverse();
      const Matrix phi_inv = phi.inverse();
      const Matrix S = phi * R_inv;
      const Matrix S_inv = R * phi_inv;
      comm[p] = std::max(comm[p], (P * R - R * P).norm());
      const Matrix target = phi * P * phi_inv;
      sim[p] = std::max(sim[p], (S * P * S_inv - target).norm() / std::max(1.0, target.norm()));
      const std::size_t i = k * paths + p;
      const double so = operator_norm(S), si = operator_norm(S_inv);
      s_norm[i] = so * so;
      s_inv[i] = si * si;
      const double po = operator_norm(target), qo = operator_norm(phi * Q * phi_inv);
      p_norm[i] = po * po;
      q_norm[i] = qo * qo;
    }
  });
  DecouplingReport rep;
  for (std::size_t p = 0; p < paths; ++p) {
    rep.max_commutator = std::max(rep.max_commutator, comm[p]);
    rep.max_similarity_residual = std::max(rep.max_similarity_residual, sim[p]);
  }
  for (std::size_t k = 0; k < nodes; ++k) {
    auto slice = [&](const std::vector<double>& v) {
      return mean_stderr(std::span<const double>(v.data() + k * paths, paths));
    };
    const auto a = slice(s_norm), b = slice(s_inv), c = slice(p_norm), d = slice(q_norm);
    rep.mean_s_norm.push_back(a.mean);
    rep.se_s_norm.push_back(a.std_error);
    rep.mean_s_inv_norm.push_back(b.mean);
    rep.se_s_inv_norm.push_back(b.std_error);
    rep.inverse_bound.push_back(c.mean + d.mean);
    rep.max_mean_s_norm = std::max(rep.max_mean_s_norm, a.mean);
    if (a.mean > 2.0 + 3.0 * a.std_error) rep.s_bound_holds = false;
    const double se = std::sqrt(b.std_error * b.std_error + c.std_error * c.std_error + d.std_error * d.std_error);
    if (b.mean > c.mean + d.mean + 3.0 * se) rep.inverse_bound_holds = false;
  }
  return rep;
}

nlohmann::json fit_to_json(const DichotomyFit& fit) {
  nlohmann::json tight = nlohmann::json::array();
  for (const auto& [s, t] : fit.tight_points) tight.push_back({s, t});
  return {{"rank", fit.rank},         {"sense", sense_name(fit.sense)}, {"K", fit.K}, {"log_K", fit.log_K},
          {"alpha", fit.alpha},       {"beta", fit.beta},               {"residual_max", fit.residual_max},
          {"tight_points", tight},    {"uniform", fit.uniform},         {"b_lt_alpha", fit.beta < fit.alpha}};
}

}  // namespace msd
