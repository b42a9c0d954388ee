#pragma once

// Second-moment Lyapunov exponents χ(u0) = limsup (1/t) log E‖u(t)‖², spectra,
// duality sums with the adjoint system and regularity estimates.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msd/engines.hpp"
#include "msd/sde.hpp"

namespace msd {

enum class ExponentMethod { ode, mc };

struct ChiOptions {
  ExponentMethod method = ExponentMethod::ode;
  double t0 = 0.0;
  double dt = 1e-2;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  /// Number of log-spaced checkpoints in the tail window.
  std::size_t checkpoints = 200;
  /// The tail window is [window_start·horizon, horizon] in elapsed time.
  double window_start = 0.5;
};

struct LyapunovEstimate {
  double chi = 0.0;
  /// Propagated Monte Carlo error of chi at the selected checkpoint (0 for ODE).
  double std_error = 0.0;
  /// (t, (1/(t − t0))·log E‖u(t)‖²) at each tail checkpoint.
  std::vector<std::pair<double, double>> tail_values;
  ExponentMethod method = ExponentMethod::ode;
};

/// limsup estimated as the maximum over the tail checkpoints. u0 is normalized
/// first, which removes the log‖u0‖²/t transient and makes χ scale invariant.
LyapunovEstimate chi_estimate(const LinearSde& sys, const Vector& u0, double horizon,
                              const ChiOptions& options = {});

struct SpectrumEstimate {
  std::vector<double> values;              // distinct, ascending
  std::vector<std::size_t> multiplicities;  // canonical-basis counts, sum n
  std::size_t split = 0;                    // number of negative values
  double cluster_tolerance = 0.05;
  std::vector<double> canonical_chi;        // χ(e_i) in basis order
  std::vector<double> random_chi;           // χ of the random unit vectors
  std::vector<double> outliers;             // random results matching no cluster
};

/// Canonical basis plus (trials − n) random unit vectors drawn from the seed.
SpectrumEstimate spectrum(const LinearSde& sys, double horizon, std::size_t trials,
                          const ChiOptions& options = {}, double cluster_tolerance = 0.05);

struct DualityReport {
  std::vector<double> chi;        // χ(u_i)
  std::vector<double> chi_dual;   // χ̃(ũ_i)
  std::vector<double> sums;       // χ(u_i) + χ̃(ũ_i)
  bool all_nonnegative = true;    // every sum ≥ −tolerance
  double tolerance = 0.05;
  /// max over paths, nodes and (i, j) of |⟨Φ(t)u_i, Ψ(t)ᵀũ_j⟩ − δ_ij|.
  double pathwise_drift = 0.0;
};

struct DualityOptions {
  std::size_t paths = 100;
  double dt = 1e-4;
  double span = 1.0;
  std::uint64_t seed = 1;
};

/// Bases are given as columns; ⟨u_i, ũ_j⟩ = δ_ij must hold to 1e−10.
DualityReport duality_defect(const LinearSde& sys, const Matrix& basis, const Matrix& dual_basis,
                             double horizon, const ChiOptions& options = {},
                             const DualityOptions& drift_options = {});

struct RegularityEstimate {
  /// min over the candidate pairs of max_i (χ + χ̃): an upper estimate of γ.
  double gamma_upper_estimate = 0.0;
  std::vector<std::vector<double>> pair_sums;
  std::size_t best_pair = 0;
  std::string basis_description;
};

struct DualPair {
  Matrix basis;
  Matrix dual_basis;
};

RegularityEstimate regularity_estimate(const LinearSde& sys, const std::vector<DualPair>& candidates,
                                       double horizon, const ChiOptions& options = {});

/// The canonical pair (Id, Id).
DualPair canonical_pair(std::size_t n);

}  // namespace msd
