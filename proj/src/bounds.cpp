#include "msd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "msd/error.hpp"
#include "msd/linalg.hpp"
#include "msd/parallel.hpp"

namespace msd {

namespace {

constexpr std::size_t kTailPoints = 400;
constexpr std::size_t kLeadPanels = 200;

// Elapsed-time panel boundaries: [0, τ_min], log-spaced lead-in up to the
// window start, then the window checkpoints.
std::vector<double> panel_points(double horizon, const AverageOptions& o, std::size_t& first_tail) {
  const double w0 = o.window_ratio * horizon;
  const double tau_min = std::min(1e-6 * horizon, 0.5 * w0);
  std::vector<double> pts{0.0};
  for (std::size_t i = 0; i < kLeadPanels; ++i)
    pts.push_back(tau_min * std::pow(w0 / tau_min, static_cast<double>(i) / kLeadPanels));
  first_tail = pts.size();
  const std::size_t m = std::max<std::size_t>(o.checkpoints, 2);
  for (std::size_t i = 0; i < m; ++i)
    pts.push_back(w0 * std::pow(horizon / w0, static_cast<double>(i) / static_cast<double>(m - 1)));
  pts.back() = horizon;
  return pts;
}

void summarize(RowAverage& row, const std::vector<double>& times, const std::vector<double>& avg) {
  row.alpha_bar = *std::max_element(avg.begin(), avg.end());
  row.alpha_under = *std::min_element(avg.begin(), avg.end());
  const std::size_t stride = std::max<std::size_t>(1, avg.size() / kTailPoints);
  for (std::size_t i = 0; i < avg.size(); i += stride) row.tail.emplace_back(times[i], avg[i]);
  if (row.tail.back().first != times.back()) row.tail.emplace_back(times.back(), avg.back());
}

}  // namespace

DiagonalAverages diagonal_averages(const LinearSde& sys, double horizon, const AverageOptions& o) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
  if (!(o.window_ratio > 0.0 && o.window_ratio < 1.0))
    throw ValidationError("window ratio must lie in (0, 1)");
  const std::size_t n = sys.dim();
  std::size_t first_tail = 0;
  const auto pts = panel_points(horizon, o, first_tail);
  std::vector<double> times(pts.begin() + static_cast<long>(first_tail), pts.end());
  for (double& t : times) t += o.t0;

  DiagonalAverages out;
  out.horizon = horizon;
  out.rows.resize(n);
  std::vector<std::vector<double>> row_avg(n);
  std::vector<char> constant(n, 0);
  std::vector<double> constant_value(n, 0.0);
  parallel_for(n, [&](std::size_t k) {
    const Expr& e = sys.drift()[k][k];
    const CompiledExpr f = e.compile(sys.params());
    auto& avg = row_avg[k];
    avg.resize(times.size());
    if (f.is_constant()) {
      constant[k] = 1;
      constant_value[k] = f(o.t0);
      std::fill(avg.begin(), avg.end(), constant_value[k]);
      return;
    }
    auto integrand = [&](double tau) {
      const double v = f(o.t0 + tau);
      if (!std::isfinite(v))
        throw DomainError(e.to_string(), "non-finite value at t=" + std::to_string(o.t0 + tau));
      return v;
    };
    double integral = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      integral += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
          integrand, pts[i - 1], pts[i], 15, o.tolerance);
      if (i >= first_tail) avg[i - first_tail] = integral / pts[i];
    }
  });
  for (std::size_t k = 0; k < n; ++k) summarize(out.rows[k], times, row_avg[k]);

  std::vector<double> tr(times.size(), 0.0);
  bool all_constant = true;
  double tr_const = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    all_constant = all_constant && constant[k];
    tr_const += constant_value[k];
  }
  if (all_constant) {
    std::fill(tr.begin(), tr.end(), tr_const);
  } else {
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < tr.size(); ++i) tr[i] += row_avg[k][i];
  }
  summarize(out.trace, times, tr);

  out.sorted_rows.resize(n);
  std::iota(out.sorted_rows.begin(), out.sorted_rows.end(), std::size_t{0});
  std::stable_sort(out.sorted_rows.begin(), out.sorted_rows.end(), [&](std::size_t a, std::size_t b) {
    return out.rows[a].alpha_bar < out.rows[b].alpha_bar;
  });
  return out;
}

double lower_bound(const DiagonalAverages& avg) {
  const double n = static_cast<double>(avg.rows.size());
  return 2.0 / n * (avg.trace.alpha_bar - avg.trace.alpha_under);
}

double lower_bound(const LinearSde& sys, double horizon, const AverageOptions& options) {
  return lower_bound(diagonal_averages(sys, horizon, options));
}

double upper_bound(const DiagonalAverages& avg) {
  double sum = 0.0;
  for (const auto& r : avg.rows) sum += r.alpha_bar - r.alpha_under;
  return 2.0 * sum;
}

double upper_bound(const LinearSde& sys, double horizon, const AverageOptions& options) {
  if (!is_upper_triangular(sys, options.t0, options.t0 + horizon))
    throw ValidationError("upper bound requires upper triangular A and G");
  return upper_bound(diagonal_averages(sys, horizon, options));
}

nlohmann::json bounds_to_json(const DiagonalAverages& avg, double lower, std::optional<double> upper) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : avg.rows) rows.push_back({{"alpha_bar", r.alpha_bar}, {"alpha_under", r.alpha_under}});
  nlohmann::json j{{"lower", lower}, {"rows", rows}, {"horizon", avg.horizon},
                   {"sorted_rows", avg.sorted_rows}};
  j["upper"] = upper ? nlohmann::json(*upper) : nlohmann::json(nullptr);
  return j;
}

TriangularizationResult triangularize_paths(const FundamentalEnsemble& ens) {
  TriangularizationResult res;
  res.paths = ens.paths();
  res.nodes = ens.nodes();
  res.S.resize(res.paths * res.nodes);
  res.X.resize(res.paths * res.nodes);
  const auto n = static_cast<Eigen::Index>(ens.dim());
  std::vector<double> unit(res.paths, 0.0), lower(res.paths, 0.0), resid(res.paths, 0.0);
  parallel_for(res.paths, [&](std::size_t p) {
    for (std::size_t k = 0; k < res.nodes; ++k) {
      const Matrix phi = ens.phi(p, k);
      QrResult qr;
      try {
        qr = gram_schmidt_qr(phi);
      } catch (const NumericError& e) {
        throw NumericError("triangularization failed on path " + std::to_string(p) + " at node " +
                           std::to_string(k) + ": " + e.what());
      }
      unit[p] = std::max(unit[p], (qr.Q.transpose() * qr.Q - Matrix::Identity(n, n)).norm());
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) lower[p] = std::max(lower[p], std::abs(qr.R(i, j)));
      resid[p] = std::max(resid[p], (qr.Q * qr.R - phi).norm() / phi.norm());
      res.S[p * res.nodes + k] = std::move(qr.Q);
      res.X[p * res.nodes + k] = std::move(qr.R);
    }
  });
  for (std::size_t p = 0; p < res.paths; ++p) {
    res.max_unitarity_defect = std::max(res.max_unitarity_defect, unit[p]);
    res.max_lower_entry = std::max(res.max_lower_entry, lower[p]);
    res.max_relative_residual = std::max(res.max_relative_residual, resid[p]);
  }
  return res;
}

InvarianceReport unitary_invariance_check(const FundamentalEnsemble& ens,
                                          const TriangularizationResult& result) {
  if (result.paths != ens.paths() || result.nodes != ens.nodes())
    throw ValidationError("triangularization does not belong to this ensemble");
  InvarianceReport rep;
  const auto n = static_cast<Eigen::Index>(ens.dim());
  rep.moment_x.assign(ens.nodes(), 0.0);
  rep.moment_phi.assign(ens.nodes(), 0.0);
  std::vector<double> xs(ens.paths()), ps(ens.paths());
  for (std::size_t k = 0; k < ens.nodes(); ++k) {
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      const Matrix phi = ens.phi(p, k);
      const Matrix& X = result.x(p, k);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double a = phi.col(j).norm();
        rep.max_norm_discrepancy =
            std::max(rep.max_norm_discrepancy, std::abs(X.col(j).norm() - a) / std::max(1.0, a));
      }
      xs[p] = X.squaredNorm();
      ps[p] = phi.squaredNorm();
      rep.max_trace_discrepancy =
          std::max(rep.max_trace_discrepancy, std::abs(xs[p] - ps[p]) / std::max(1.0, ps[p]));
    }
    rep.moment_x[k] = mean_stderr(xs).mean;
    rep.moment_phi[k] = mean_stderr(ps).mean;
  }
  return rep;
}

}  // namespace msd
