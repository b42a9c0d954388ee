#include "msd/lyapunov.hpp"

#include <algorithm>
#include <cmath>

#include "msd/error.hpp"
#include "msd/parallel.hpp"

namespace msd {

namespace {

std::vector<double> tail_checkpoints(double t0, double horizon, const ChiOptions& o) {
  const std::size_t m = std::max<std::size_t>(o.checkpoints, 2);
  const double lo = std::log(o.window_start * horizon), hi = std::log(horizon);
  std::vector<double> ts(m);
  for (std::size_t i = 0; i < m; ++i)
    ts[i] = t0 + std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1));
  ts.back() = t0 + horizon;
  return ts;
}

}  // namespace

LyapunovEstimate chi_estimate(const LinearSde& sys, const Vector& u0, double horizon,
                              const ChiOptions& o) {
  if (u0.size() != static_cast<Eigen::Index>(sys.dim()))
    throw ValidationError("initial vector has the wrong dimension");
  if (u0.squaredNorm() == 0.0) throw ValidationError("initial vector must be nonzero");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (!(o.window_start > 0.0 && o.window_start < 1.0))
    throw ValidationError("tail window start must lie in (0, 1)");
  LyapunovEstimate est;
  est.method = o.method;
  est.chi = -std::numeric_limits<double>::infinity();
  if (o.method == ExponentMethod::ode) {
    const auto ts = tail_checkpoints(o.t0, horizon, o);
    const Vector v = u0 / u0.norm();
    const Matrix P0 = v * v.transpose();
    const auto res = moment_ode(sys, P0, o.t0, o.t0 + horizon, o.dt, ts);
    for (const auto& pt : res.curve) {
      if (pt.t < ts.front()) continue;
      const double chi = pt.log_value / (pt.t - o.t0);
      est.tail_values.emplace_back(pt.t, chi);
      est.chi = std::max(est.chi, chi);
    }
    return est;
  }
  // Monte Carlo: the stored grid provides the checkpoints.
  const TimeGrid grid = TimeGrid::covering(o.t0, o.t0 + horizon, o.dt);
  std::size_t stride = 1;
  const std::size_t want = std::max<std::size_t>(o.checkpoints, 2) * 2;
  for (std::size_t s = grid.steps() / want; s > 1; --s)
    if (grid.steps() % s == 0) {
      stride = s;
      break;
    }
  const auto curve = mc_moment_curve(sys, u0 / u0.norm(), grid, o.paths, o.seed, stride);
  const double start = o.t0 + o.window_start * horizon;
  for (const auto& pt : curve) {
    if (pt.t < start - 1e-12 * horizon || pt.t <= o.t0) continue;
    const double chi = pt.log_value / (pt.t - o.t0);
    est.tail_values.emplace_back(pt.t, chi);
    if (chi > est.chi) {
      est.chi = chi;
      est.std_error = pt.value > 0.0 ? pt.std_error / (pt.value * (pt.t - o.t0)) : 0.0;
    }
  }
  return est;
}

SpectrumEstimate spectrum(const LinearSde& sys, double horizon, std::size_t trials,
                          const ChiOptions& options, double tol) {
  const std::size_t n = sys.dim();
  if (trials < n) throw ValidationError("spectrum: trials must be at least the dimension");
  std::vector<Vector> starts;
  for (std::size_t i = 0; i < n; ++i) starts.push_back(Vector::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)));
  for (std::size_t r = n; r < trials; ++r) {
    RngStream rng(options.seed, 0x5eed0000ull + r);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
    starts.push_back(v / v.norm());
  }
  std::vector<double> chi(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    chi[i] = chi_estimate(sys, starts[i], horizon, options).chi;
  });
  SpectrumEstimate out;
  out.cluster_tolerance = tol;
  out.canonical_chi.assign(chi.begin(), chi.begin() + static_cast<long>(n));
  out.random_chi.assign(chi.begin() + static_cast<long>(n), chi.end());
  // Single-linkage clusters of the canonical results.
  std::vector<double> sorted = out.canonical_chi;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<double>> clusters;
  for (double v : sorted) {
    if (clusters.empty() || v - clusters.back().back() > tol)
      clusters.push_back({v});
    else
      clusters.back().push_back(v);
  }
  for (const auto& c : clusters) {
    double sum = 0.0;
    for (double v : c) sum += v;
    out.values.push_back(sum / static_cast<double>(c.size()));
    out.multiplicities.push_back(c.size());
  }
  for (double v : out.random_chi) {
    bool matched = false;
    for (const auto& c : clusters)
      if (v >= c.front() - tol && v <= c.back() + tol) matched = true;
    if (!matched) out.outliers.push_back(v);
  }
  out.split = static_cast<std::size_t>(
      std::count_if(out.values.begin(), out.values.end(), [](double v) { return v < 0.0; }));
  return out;
}

DualityReport duality_defect(const LinearSde& sys, const Matrix& basis, const Matrix& dual_basis,
                             double horizon, const ChiOptions& options,
                             const DualityOptions& drift_options) {
  const auto n = static_cast<Eigen::Index>(sys.dim());
  if (basis.rows() != n || basis.cols() != n || dual_basis.rows() != n || dual_basis.cols() != n)
    throw ValidationError("duality: bases must be n vectors of length n");
  const Matrix gram = basis.transpose() * dual_basis;
  if ((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-10)
    throw ValidationError("duality: bases are not dual (<u_i, u~_j> != delta_ij)");
  const LinearSde adj = adjoint(sys);
  DualityReport rep;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = chi_estimate(sys, basis.col(i), horizon, options).chi;
    const double cd = chi_estimate(adj, dual_basis.col(i), horizon, options).chi;
    rep.chi.push_back(c);
    rep.chi_dual.push_back(cd);
    rep.sums.push_back(c + cd);
    if (c + cd < -rep.tolerance) rep.all_nonnegative = false;
  }
  if (drift_options.paths > 0) {
    const TimeGrid grid = TimeGrid::covering(options.t0, options.t0 + drift_options.span, drift_options.dt);
    std::size_t stride = 1;
    for (std::size_t s = std::min<std::size_t>(grid.steps(), 100); s > 1; --s)
      if (grid.steps() % s == 0) {
        stride = s;
        break;
      }
    const auto ens = simulate_fundamental(sys, grid, drift_options.paths, drift_options.seed,
                                          {Scheme::milstein, stride});
    for (std::size_t p = 0; p < ens.paths(); ++p)
      for (std::size_t k = 0; k < ens.nodes(); ++k) {
        const Matrix inner = dual_basis.transpose() * ens.psi(p, k) * ens.phi(p, k) * basis;
        rep.pathwise_drift = std::max(rep.pathwise_drift, (inner - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
      }
  }
  return rep;
}

DualPair canonical_pair(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {Matrix::Identity(m, m), Matrix::Identity(m, m)};
}

RegularityEstimate regularity_estimate(const LinearSde& sys, const std::vector<DualPair>& candidates,
                                       double horizon, const ChiOptions& options) {
  if (candidates.empty()) throw ValidationError("regularity: no candidate bases supplied");
  RegularityEstimate est;
  est.gamma_upper_estimate = std::numeric_limits<double>::infinity();
  DualityOptions no_paths;
  no_paths.paths = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto rep = duality_defect(sys, candidates[c].basis, candidates[c].dual_basis, horizon, options, no_paths);
    const double worst = *std::max_element(rep.sums.begin(), rep.sums.end());
    est.pair_sums.push_back(rep.sums);
    if (worst < est.gamma_upper_estimate) {
      est.gamma_upper_estimate = worst;
      est.best_pair = c;
    }
  }
  est.basis_description = "minimum over " + std::to_string(candidates.size()) +
                          " supplied dual basis pair(s); an upper estimate of the regularity coefficient";
  return est;
}

}  // namespace msd
