#pragma once

// Solution engines: Monte Carlo paths of the fundamental matrix and its
// inverse, the deterministic second-moment ODE, and pathwise closed forms for
// scalar and triangular systems.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msd/linalg.hpp"
#include "msd/random.hpp"
#include "msd/sde.hpp"

namespace msd {

struct TimeGrid {
  double t0 = 0.0;
  double dt = 1e-3;
  std::size_t count = 2;  // number of nodes

  TimeGrid() = default;
  TimeGrid(double t0, double dt, std::size_t count);
  /// Grid on [t0, t1] with ceil((t1 - t0)/dt_max) equal steps.
  static TimeGrid covering(double t0, double t1, double dt_max);

  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  double end() const noexcept { return time(count - 1); }
  std::size_t steps() const noexcept { return count - 1; }
};

enum class Scheme {
  euler_maruyama,
  /// Euler–Maruyama plus the ½G²(ΔW² − Δt) correction, exact for commuting
  /// scalar-noise terms; default.
  milstein,
};

struct SimulationOptions {
  Scheme scheme = Scheme::milstein;
  /// Keep every k-th node (node 0 and the last node are always kept when
  /// steps is a multiple of k).
  std::size_t store_every = 1;
  double explosion_threshold = 1e150;
};

/// Φ and Ψ = Φ⁻¹ on a (possibly thinned) grid for many paths. Ψ is integrated
/// from the adjoint equation dΨ = Ψ(−A + G²)dt − ΨG dω on the same increments.
class FundamentalEnsemble {
 public:
  FundamentalEnsemble(TimeGrid grid, std::size_t stride, std::size_t paths, std::size_t dim,
                      std::uint64_t seed);

  const TimeGrid& simulation_grid() const noexcept { return grid_; }
  /// Grid of the stored nodes (spacing stride·dt).
  TimeGrid stored_grid() const;
  std::size_t nodes() const noexcept { return nodes_; }
  std::size_t paths() const noexcept { return paths_; }
  std::size_t dim() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Eigen::Map<const Matrix> phi(std::size_t path, std::size_t node) const;
  Eigen::Map<const Matrix> psi(std::size_t path, std::size_t node) const;
  Eigen::Map<Matrix> phi(std::size_t path, std::size_t node);
  Eigen::Map<Matrix> psi(std::size_t path, std::size_t node);

 private:
  std::size_t offset(std::size_t path, std::size_t node) const;

  TimeGrid grid_;
  std::size_t stride_, paths_, n_, nodes_;
  std::uint64_t seed_;
  std::vector<double> phi_, psi_;
};

struct FundamentalPath {
  std::vector<Matrix> phi;
  std::vector<Matrix> psi;
};

/// Both matrices at every node of `path` (used for pathwise comparisons).
FundamentalPath simulate_fundamental_path(const LinearSde& sys, const BrownianPath& path,
                                          const SimulationOptions& options = {});

/// Path p uses brownian(grid.t0, grid.dt, steps, RngStream(seed, p)).
FundamentalEnsemble simulate_fundamental(const LinearSde& sys, const TimeGrid& grid,
                                         std::size_t paths, std::uint64_t seed,
                                         const SimulationOptions& options = {});

struct MomentPoint {
  double t = 0.0;
  double value = 0.0;
  /// log(value); stays finite when value itself over- or underflows.
  double log_value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};
using MomentCurve = std::vector<MomentPoint>;

struct MomentOdeResult {
  MomentCurve curve;
  /// Final moment matrix is final_moment · exp(final_log_scale).
  Matrix final_moment;
  double final_log_scale = 0.0;
};

/// Integrates dP/dt = AP + PAᵀ + GPGᵀ with classical RK4, steps ≤ dt (shorter
/// where 2‖A‖ + ‖G‖² is large). Records
/// the start, every entry of `record_times` (sorted, inside (t_from, t_to]) and
/// the end; with no record times every step is recorded.
MomentOdeResult moment_ode(const LinearSde& sys, const Matrix& P0, double t_from, double t_to,
                           double dt, std::span<const double> record_times = {});

/// E‖Φ(t)Φ⁻¹(s)‖²_F, or with a projector E‖Φ(t)P̃Φ⁻¹(s)‖²_F for t ≥ s and
/// E‖Φ(t)Q̃Φ⁻¹(s)‖²_F for t < s. The t < s branch integrates the adjoint system
/// from t to s (the transpose of Φ(t)Φ⁻¹(s) is its transition matrix).
double transition_second_moment(const LinearSde& sys, double s, double t,
                                const std::optional<Projector>& projector = std::nullopt,
                                double dt = 1e-3);

enum class InverseSide {
  none,   // ‖Φ(t)·W‖²
  left,   // ‖Ψ(t)·W·Φ(s)‖²
  right,  // ‖Φ(t)·W·Ψ(s)‖²
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo mean over paths of the chosen norm with W = P̃ (t ≥ s), Q̃ (t < s)
/// or Id without projector. Nodes index the stored grid. For s = t with the
/// right side the exact inverse of Φ(t) is used, so the identity case is exactly n.
Estimate mc_second_moment(const FundamentalEnsemble& ens, std::size_t s_node, std::size_t t_node,
                          const std::optional<Projector>& projector = std::nullopt,
                          InverseSide side = InverseSide::right);

/// E‖u(t)‖² for u(t0) = u0 by simulating the vector equation directly.
MomentCurve mc_moment_curve(const LinearSde& sys, const Vector& u0, const TimeGrid& grid,
                            std::size_t paths, std::uint64_t seed, std::size_t store_every = 1,
                            const SimulationOptions& options = {});

/// Pathwise solution of dx = (a x + c)dt + (b x + d)dω from sampled coefficients
/// (one value per node, the last unused) with left-point quadrature:
/// x = Φ̃(x0 + ∫Φ̃⁻¹(c − b d)dτ + ∫Φ̃⁻¹ d dω), Φ̃ = exp(∫(a − b²/2)dτ + ∫b dω).
std::vector<double> closed_scalar(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> c, std::span<const double> d,
                                  const BrownianPath& path, double x0);

/// Expression form; c and d may be omitted (homogeneous case).
std::vector<double> closed_scalar(const Expr& a, const Expr& b, const std::optional<Expr>& c,
                                  const std::optional<Expr>& d, const ParamMap& params,
                                  const BrownianPath& path, double x0);

struct TriangularSolution {
  std::vector<Matrix> U;        // fundamental matrix (upper triangular)
  std::vector<Matrix> U_tilde;  // adjoint fundamental matrix (lower triangular)
};

/// Builds U column by column from the bottom row up: each entry is the scalar
/// closed form with the already known entries below it as forcing. Ũ solves
/// the (lower-triangular) adjoint the same way from the top row down.
TriangularSolution triangular_fundamental(const LinearSde& sys, const BrownianPath& path);

}  // namespace msd
