#include "msd/engines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "msd/error.hpp"
#include "msd/parallel.hpp"

namespace msd {

// ----------------------------------------------------------------- TimeGrid

TimeGrid::TimeGrid(double t0_, double dt_, std::size_t count_) : t0(t0_), dt(dt_), count(count_) {
  if (!std::isfinite(t0)) throw ValidationError("time grid: t0 must be finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time grid: dt must be positive");
  if (count < 2) throw ValidationError("time grid: at least two nodes required");
}

TimeGrid TimeGrid::covering(double t0, double t1, double dt_max) {
  if (!(t1 > t0)) throw ValidationError("time grid: end time must exceed start time");
  if (!(dt_max > 0.0)) throw ValidationError("time grid: dt must be positive");
  const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt_max - 1e-9));
  return TimeGrid(t0, (t1 - t0) / static_cast<double>(std::max<std::size_t>(steps, 1)),
                  std::max<std::size_t>(steps, 1) + 1);
}

// ------------------------------------------------------------------ ensemble

FundamentalEnsemble::FundamentalEnsemble(TimeGrid grid, std::size_t stride, std::size_t paths,
                                         std::size_t dim, std::uint64_t seed)
    : grid_(grid), stride_(stride), paths_(paths), n_(dim), seed_(seed) {
  if (stride == 0) throw ValidationError("ensemble: storage stride must be positive");
  if (paths == 0) throw ValidationError("ensemble: at least one path required");
  nodes_ = grid.steps() / stride + 1;
  phi_.assign(paths * nodes_ * n_ * n_, 0.0);
  psi_.assign(paths * nodes_ * n_ * n_, 0.0);
}

TimeGrid FundamentalEnsemble::stored_grid() const {
  return TimeGrid(grid_.t0, grid_.dt * static_cast<double>(stride_), std::max<std::size_t>(nodes_, 2));
}

std::size_t FundamentalEnsemble::offset(std::size_t path, std::size_t node) const {
  if (path >= paths_ || node >= nodes_) throw ValidationError("ensemble: path or node out of range");
  return (path * nodes_ + node) * n_ * n_;
}

Eigen::Map<const Matrix> FundamentalEnsemble::phi(std::size_t path, std::size_t node) const {
  const auto n = static_cast<Eigen::Index>(n_);
  return Eigen::Map<const Matrix>(phi_.data() + offset(path, node), n, n);
}
Eigen::Map<const Matrix> FundamentalEnsemble::psi(std::size_t path, std::size_t node) const {
  const auto n = static_cast<Eigen::Index>(n_);
  return Eigen::Map<const Matrix>(psi_.data() + offset(path, node), n, n);
}
Eigen::Map<Matrix> FundamentalEnsemble::phi(std::size_t path, std::size_t node) {
  const auto n = static_cast<Eigen::Index>(n_);
  return Eigen::Map<Matrix>(phi_.data() + offset(path, node), n, n);
}
Eigen::Map<Matrix> FundamentalEnsemble::psi(std::size_t path, std::size_t node) {
  const auto n = static_cast<Eigen::Index>(n_);
  return Eigen::Map<Matrix>(psi_.data() + offset(path, node), n, n);
}

namespace {

void check_explosion(const Matrix& M, double threshold, std::size_t path, std::size_t node,
                     double t, const char* what) {
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      const double v = M(i, j);
      if (!std::isfinite(v) || std::fabs(v) > threshold)
        throw NumericError("explosion on path " + std::to_string(path) + " at node " +
                           std::to_string(node) + " (t=" + std::to_string(t) + "): " + what +
                           " entry (" + std::to_string(i) + "," + std::to_string(j) +
                           ") exceeds " + std::to_string(threshold));
    }
}

/// One step of the coupled forward/adjoint recursion.
class CoupledStepper {
 public:
  CoupledStepper(const LinearSde& sys, const SimulationOptions& options)
      : eval_(sys), options_(options) {
    const auto n = static_cast<Eigen::Index>(sys.dim());
    A_.resize(n, n);
    G_.resize(n, n);
    if (eval_.autonomous()) load(0.0);
  }

  void step(double t, double dt, double dw, Matrix& phi, Matrix& psi) {
    if (!eval_.autonomous()) load(t);
    const double corr = options_.scheme == Scheme::milstein ? 0.5 * (dw * dw - dt) : 0.0;
    Matrix phi_next = phi + (A_ * phi) * dt + (G_ * phi) * dw;
    Matrix psi_next = psi + (psi * adj_drift_) * dt - (psi * G_) * dw;
    if (corr != 0.0 && eval_.has_diffusion()) {
      phi_next.noalias() += corr * (G2_ * phi);
      psi_next.noalias() += corr * (psi * G2_);
    }
    phi.swap(phi_next);
    psi.swap(psi_next);
  }

  void step_vector(double t, double dt, double dw, Vector& u) {
    if (!eval_.autonomous()) load(t);
    const double corr = options_.scheme == Scheme::milstein ? 0.5 * (dw * dw - dt) : 0.0;
    Vector next = u + (A_ * u) * dt + (G_ * u) * dw;
    if (corr != 0.0 && eval_.has_diffusion()) next.noalias() += corr * (G2_ * u);
    u.swap(next);
  }

  const Matrix& drift() const { return A_; }
  const Matrix& diffusion() const { return G_; }
  void load(double t) {
    eval_.drift(t, A_);
    eval_.diffusion(t, G_);
    G2_ = G_ * G_;
    adj_drift_ = -A_ + G2_;
  }

 private:
  SdeEvaluator eval_;
  SimulationOptions options_;
  Matrix A_, G_, G2_, adj_drift_;
};

}  // namespace

FundamentalPath simulate_fundamental_path(const LinearSde& sys, const BrownianPath& path,
                                          const SimulationOptions& options) {
  const auto n = static_cast<Eigen::Index>(sys.dim());
  CoupledStepper stepper(sys, options);
  FundamentalPath out;
  Matrix phi = Matrix::Identity(n, n), psi = Matrix::Identity(n, n);
  out.phi.reserve(path.steps() + 1);
  out.psi.reserve(path.steps() + 1);
  out.phi.push_back(phi);
  out.psi.push_back(psi);
  for (std::size_t k = 0; k < path.steps(); ++k) {
    stepper.step(path.time(k), path.dt, path.increments[k], phi, psi);
    check_explosion(phi, options.explosion_threshold, 0, k + 1, path.time(k + 1), "Phi");
    check_explosion(psi, options.explosion_threshold, 0, k + 1, path.time(k + 1), "Psi");
    out.phi.push_back(phi);
    out.psi.push_back(psi);
  }
  return out;
}

FundamentalEnsemble simulate_fundamental(const LinearSde& sys, const TimeGrid& grid,
                                         std::size_t paths, std::uint64_t seed,
                                         const SimulationOptions& options) {
  const std::size_t stride = std::max<std::size_t>(options.store_every, 1);
  if (grid.steps() % stride != 0)
    throw ValidationError("ensemble: storage stride must divide the number of steps");
  FundamentalEnsemble ens(grid, stride, paths, sys.dim(), seed);
  const auto n = static_cast<Eigen::Index>(sys.dim());
  parallel_for(paths, [&](std::size_t p) {
    const BrownianPath path = brownian(grid.t0, grid.dt, grid.steps(), RngStream(seed, p));
    CoupledStepper stepper(sys, options);
    Matrix phi = Matrix::Identity(n, n), psi = Matrix::Identity(n, n);
    ens.phi(p, 0) = phi;
    ens.psi(p, 0) = psi;
    for (std::size_t k = 0; k < path.steps(); ++k) {
      stepper.step(path.time(k), path.dt, path.increments[k], phi, psi);
      check_explosion(phi, options.explosion_threshold, p, k + 1, path.time(k + 1), "Phi");
      check_explosion(psi, options.explosion_threshold, p, k + 1, path.time(k + 1), "Psi");
      if ((k + 1) % stride == 0) {
        ens.phi(p, (k + 1) / stride) = phi;
        ens.psi(p, (k + 1) / stride) = psi;
      }
    }
  });
  return ens;
}

// ---------------------------------------------------------------- moment ODE

MomentOdeResult moment_ode(const LinearSde& sys, const Matrix& P0, double t_from, double t_to,
                           double dt, std::span<const double> record_times) {
  const auto n = static_cast<Eigen::Index>(sys.dim());
  if (P0.rows() != n || P0.cols() != n) throw ValidationError("moment ODE: P0 has the wrong shape");
  if (!(t_to >= t_from)) throw ValidationError("moment ODE: t_to must not precede t_from");
  if (!(dt > 0.0)) throw ValidationError("moment ODE: dt must be positive");
  const double p_scale = std::max(1.0, P0.norm());
  if ((P0 - P0.transpose()).norm() > 1e-12 * p_scale)
    throw ValidationError("moment ODE: P0 must be symmetric");
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(P0);
    if (eig.eigenvalues().minCoeff() < -1e-12 * p_scale)
      throw ValidationError("moment ODE: P0 must be positive semidefinite");
  }

  std::vector<double> targets;
  if (record_times.empty()) {
    if (t_to > t_from) {
      const TimeGrid g = TimeGrid::covering(t_from, t_to, dt);
      for (std::size_t k = 1; k < g.count; ++k) targets.push_back(k + 1 == g.count ? t_to : g.time(k));
    }
  } else {
    double prev = t_from;
    for (double r : record_times) {
      if (!(r > prev) || r > t_to)
        throw ValidationError("moment ODE: record times must increase inside (t_from, t_to]");
      targets.push_back(r);
      prev = r;
    }
    if (targets.back() < t_to) targets.push_back(t_to);
  }

  SdeEvaluator eval(sys);
  Matrix A(n, n), G(n, n);
  auto rhs = [&](double t, const Matrix& P) -> Matrix {
    if (!eval.autonomous()) {
      eval.drift(t, A);
      eval.diffusion(t, G);
    }
    Matrix AP = A * P;
    return AP + AP.transpose() + G * P * G.transpose();
  };
  if (eval.autonomous()) {
    eval.drift(t_from, A);
    eval.diffusion(t_from, G);
  }

  Matrix P = P0;
  double log_scale = 0.0;
  std::size_t step_count = 0;
  MomentOdeResult out;
  auto check_psd = [&](double t) {
    const double tr = P.trace();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(P, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    // Rank-deficient starts (u0·u0ᵀ) sit on the boundary of the cone, so allow
    // truncation-level negative eigenvalues.
    if (lo < -1e-6 * std::fabs(tr)) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "moment ODE lost positive semidefiniteness at t=%g (smallest eigenvalue %.3g, "
                    "trace %.6g); reduce dt", t, lo, tr);
      throw NumericError(buf);
    }
  };
  auto record = [&](double t) {
    const double tr = P.trace();
    MomentPoint pt;
    pt.t = t;
    pt.exact = true;
    if (tr > 0.0) {
      pt.log_value = std::log(tr) + log_scale;
      pt.value = std::exp(pt.log_value);
    } else {
      pt.log_value = -std::numeric_limits<double>::infinity();
      pt.value = 0.0;
    }
    out.curve.push_back(pt);
  };
  record(t_from);
  double t = t_from;
  for (double target : targets) {
    const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil((target - t) / dt - 1e-9)));
    const double h = (target - t) / static_cast<double>(m);
    const double start = t;
    for (std::size_t i = 0; i < m; ++i) {
      const double ti = start + static_cast<double>(i) * h;
      // Subdivide where the coefficients are large so that h·‖L‖ stays
      // well inside the RK4 stability region.
      std::size_t sub = 1;
      if (!eval.autonomous()) {
        eval.drift(ti, A);
        eval.diffusion(ti, G);
      }
      const double stiffness = 2.0 * A.norm() + G.squaredNorm();
      if (h * stiffness > 0.5) sub = static_cast<std::size_t>(std::ceil(h * stiffness / 0.5));
      const double hs = h / static_cast<double>(sub);
      for (std::size_t j = 0; j < sub; ++j) {
        const double tj = ti + static_cast<double>(j) * hs;
        const Matrix k1 = rhs(tj, P);
        const Matrix k2 = rhs(tj + 0.5 * hs, P + 0.5 * hs * k1);
        const Matrix k3 = rhs(tj + 0.5 * hs, P + 0.5 * hs * k2);
        const Matrix k4 = rhs(tj + hs, P + hs * k3);
        P += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        P = 0.5 * (P + P.transpose()).eval();
        const double tr = P.trace();
        if (!std::isfinite(tr)) throw NumericError("moment ODE overflow at t=" + std::to_string(tj + hs));
        if (tr > 0.0) {
          P /= tr;
          log_scale += std::log(tr);
        }
        if (++step_count % 64 == 0) check_psd(tj + hs);
      }
    }
    t = target;
    check_psd(t);
    record(t);
  }
  out.final_moment = P;
  out.final_log_scale = log_scale;
  return out;
}

double transition_second_moment(const LinearSde& sys, double s, double t,
                                const std::optional<Projector>& projector, double dt) {
  const auto n = static_cast<Eigen::Index>(sys.dim());
  Matrix P0 = Matrix::Identity(n, n);
  if (projector) {
    if (projector->dim() != sys.dim()) throw ValidationError("projector dimension mismatch");
    if (!projector->trivial() &&
        !is_block_diagonal(sys, projector->rank(), std::min(s, t), std::max(s, t)))
      throw ValidationError(
          "projector is not conformal with a block-diagonal system; use Monte Carlo");
    P0 = t >= s ? projector->matrix() : projector->complement();
  }
  if (t == s) return P0.trace();
  if (t > s) return moment_ode(sys, P0, s, t, dt).curve.back().value;
  return moment_ode(adjoint(sys), P0, t, s, dt).curve.back().value;
}

Estimate mc_second_moment(const FundamentalEnsemble& ens, std::size_t s_node, std::size_t t_node,
                          const std::optional<Projector>& projector, InverseSide side) {
  if (s_node >= ens.nodes() || t_node >= ens.nodes())
    throw ValidationError("node index out of range");
  const auto n = static_cast<Eigen::Index>(ens.dim());
  Matrix W = Matrix::Identity(n, n);
  if (projector) {
    if (projector->dim() != ens.dim()) throw ValidationError("projector dimension mismatch");
    W = t_node >= s_node ? projector->matrix() : projector->complement();
  }
  std::vector<double> values(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    Matrix M;
    switch (side) {
      case InverseSide::none: M = ens.phi(p, t_node) * W; break;
      case InverseSide::left: M = ens.psi(p, t_node) * W * ens.phi(p, s_node); break;
      case InverseSide::right:
        if (s_node == t_node) {
          if (!projector) {
            values[p] = static_cast<double>(n);
            continue;
          }
          M = ens.phi(p, t_node) * W * Matrix(ens.phi(p, t_node)).inverse();
        } else {
          M = ens.phi(p, t_node) * W * ens.psi(p, s_node);
        }
        break;
    }
    values[p] = M.squaredNorm();
  }
  const auto ms = mean_stderr(values);
  return {ms.mean, ms.std_error};
}

MomentCurve mc_moment_curve(const LinearSde& sys, const Vector& u0, const TimeGrid& grid,
                            std::size_t paths, std::uint64_t seed, std::size_t store_every,
                            const SimulationOptions& options) {
  if (paths == 0) throw ValidationError("at least one path required");
  const std::size_t stride = std::max<std::size_t>(store_every, 1);
  if (grid.steps() % stride != 0)
    throw ValidationError("storage stride must divide the number of steps");
  if (u0.size() != static_cast<Eigen::Index>(sys.dim()))
    throw ValidationError("initial vector has the wrong dimension");
  const std::size_t nodes = grid.steps() / stride + 1;
  std::vector<double> sq(paths * nodes);
  parallel_for(paths, [&](std::size_t p) {
    const BrownianPath path = brownian(grid.t0, grid.dt, grid.steps(), RngStream(seed, p));
    CoupledStepper stepper(sys, options);
    Vector u = u0;
    sq[p * nodes] = u.squaredNorm();
    for (std::size_t k = 0; k < path.steps(); ++k) {
      stepper.step_vector(path.time(k), path.dt, path.increments[k], u);
      check_explosion(u, options.explosion_threshold, p, k + 1, path.time(k + 1), "u");
      if ((k + 1) % stride == 0) sq[p * nodes + (k + 1) / stride] = u.squaredNorm();
    }
  });
  MomentCurve curve(nodes);
  std::vector<double> column(paths);
  for (std::size_t k = 0; k < nodes; ++k) {
    for (std::size_t p = 0; p < paths; ++p) column[p] = sq[p * nodes + k];
    const auto ms = mean_stderr(column);
    auto& pt = curve[k];
    pt.t = grid.time(k * stride);
    pt.value = ms.mean;
    pt.log_value = ms.mean > 0.0 ? std::log(ms.mean) : -std::numeric_limits<double>::infinity();
    pt.std_error = ms.std_error;
    pt.exact = false;
  }
  return curve;
}

// ------------------------------------------------------------- closed forms

std::vector<double> closed_scalar(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> c, std::span<const double> d,
                                  const BrownianPath& path, double x0) {
  const std::size_t nodes = path.steps() + 1;
  auto check = [&](std::span<const double> v, const char* name) {
    if (!v.empty() && v.size() < nodes)
      throw ValidationError(std::string("closed form: coefficient '") + name + "' is too short");
  };
  check(a, "a");
  check(b, "b");
  check(c, "c");
  check(d, "d");
  auto at = [](std::span<const double> v, std::size_t k) { return v.empty() ? 0.0 : v[k]; };
  std::vector<double> x(nodes);
  double lambda = 0.0;  // log Φ̃
  double integral = 0.0;
  x[0] = x0;
  for (std::size_t k = 0; k < path.steps(); ++k) {
    const double ak = at(a, k), bk = at(b, k), ck = at(c, k), dk = at(d, k);
    const double dw = path.increments[k];
    const double inv = std::exp(-lambda);
    integral += inv * ((ck - bk * dk) * path.dt + dk * dw);
    lambda += (ak - 0.5 * bk * bk) * path.dt + bk * dw;
    x[k + 1] = std::exp(lambda) * (x0 + integral);
  }
  return x;
}

std::vector<double> closed_scalar(const Expr& a, const Expr& b, const std::optional<Expr>& c,
                                  const std::optional<Expr>& d, const ParamMap& params,
                                  const BrownianPath& path, double x0) {
  const std::size_t nodes = path.steps() + 1;
  auto sample = [&](const Expr& e) {
    const CompiledExpr ce = e.compile(params);
    std::vector<double> v(nodes);
    for (std::size_t k = 0; k < nodes; ++k) v[k] = ce(path.time(k));
    return v;
  };
  const auto av = sample(a), bv = sample(b);
  const auto cv = c ? sample(*c) : std::vector<double>{};
  const auto dv = d ? sample(*d) : std::vector<double>{};
  return closed_scalar(av, bv, cv, dv, path, x0);
}

namespace {

std::vector<Matrix> solve_triangular(const LinearSde& sys, const BrownianPath& path, bool upper) {
  const std::size_t n = sys.dim();
  const std::size_t nodes = path.steps() + 1;
  const SdeEvaluator eval(sys);
  std::vector<Matrix> A(nodes), G(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    eval.drift(path.time(k), A[k]);
    eval.diffusion(path.time(k), G[k]);
  }
  std::vector<Matrix> U(nodes, Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  std::vector<double> a(nodes), b(nodes), c(nodes), d(nodes);
  for (std::size_t j = 0; j < n; ++j) {
    // Rows in dependency order: the diagonal first, then away from it.
    std::vector<std::size_t> rows;
    if (upper)
      for (std::size_t i = j + 1; i-- > 0;) rows.push_back(i);
    else
      for (std::size_t i = j; i < n; ++i) rows.push_back(i);
    for (std::size_t i : rows) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      for (std::size_t k = 0; k < nodes; ++k) {
        a[k] = A[k](ii, ii);
        b[k] = G[k](ii, ii);
        double ck = 0.0, dk = 0.0;
        if (upper) {
          for (std::size_t m = i + 1; m <= j; ++m) {
            const auto mm = static_cast<Eigen::Index>(m);
            ck += A[k](ii, mm) * U[k](mm, jj);
            dk += G[k](ii, mm) * U[k](mm, jj);
          }
        } else {
          for (std::size_t m = j; m < i; ++m) {
            const auto mm = static_cast<Eigen::Index>(m);
            ck += A[k](ii, mm) * U[k](mm, jj);
            dk += G[k](ii, mm) * U[k](mm, jj);
          }
        }
        c[k] = ck;
        d[k] = dk;
      }
      const auto x = closed_scalar(a, b, c, d, path, i == j ? 1.0 : 0.0);
      for (std::size_t k = 0; k < nodes; ++k) U[k](ii, jj) = x[k];
    }
  }
  return U;
}

}  // namespace

TriangularSolution triangular_fundamental(const LinearSde& sys, const BrownianPath& path) {
  const double t1 = path.time(path.steps());
  if (!is_upper_triangular(sys, path.t0, t1))
    throw ValidationError("triangular solver: A and G must be upper triangular");
  TriangularSolution out;
  out.U = solve_triangular(sys, path, true);
  out.U_tilde = solve_triangular(adjoint(sys), path, false);
  return out;
}

}  // namespace msd
