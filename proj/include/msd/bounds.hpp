#pragma once

// Bounds on the regularity coefficient from time averages of the diagonal of
// A(t), and pathwise triangularization of the fundamental matrix.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "msd/engines.hpp"
#include "msd/sde.hpp"

namespace msd {

struct AverageOptions {
  double t0 = 0.0;
  /// Tail window [t0 + window_ratio·horizon, t0 + horizon]. The default spans
  /// one full period of functions of log t.
  double window_ratio = 0.0018674427317079893;  // e^{-2π}
  std::size_t checkpoints = 4000;
  double tolerance = 1e-10;
};

struct RowAverage {
  double alpha_bar = 0.0;    // limsup of the running average of a_kk
  double alpha_under = 0.0;  // liminf
  std::vector<std::pair<double, double>> tail;  // (t, average), thinned
};

struct DiagonalAverages {
  std::vector<RowAverage> rows;
  RowAverage trace;  // same for tr A
  double horizon = 0.0;
  /// Row indices sorted by increasing alpha_bar.
  std::vector<std::size_t> sorted_rows;
};

/// Running averages (1/(t − t0))∫_{t0}^t a_kk by adaptive Gauss–Kronrod
/// quadrature between consecutive log-spaced checkpoints; limsup and liminf
/// are the max and min over the checkpoints of the tail window. Constant
/// entries are returned exactly.
DiagonalAverages diagonal_averages(const LinearSde& sys, double horizon,
                                   const AverageOptions& options = {});

/// (2/n)(limsup − liminf) of the running average of tr A.
double lower_bound(const LinearSde& sys, double horizon, const AverageOptions& options = {});
double lower_bound(const DiagonalAverages& averages);

/// 2 Σ_k (ᾱ_k − α̲_k); requires A and G upper triangular on the window.
double upper_bound(const LinearSde& sys, double horizon, const AverageOptions& options = {});
double upper_bound(const DiagonalAverages& averages);

nlohmann::json bounds_to_json(const DiagonalAverages& averages, double lower,
                              std::optional<double> upper);

struct TriangularizationResult {
  std::size_t paths = 0;
  std::size_t nodes = 0;
  std::vector<Matrix> S;  // index path·nodes + node
  std::vector<Matrix> X;
  double max_unitarity_defect = 0.0;    // ‖SᵀS − Id‖_F
  double max_lower_entry = 0.0;         // max |X_ij|, i > j
  double max_relative_residual = 0.0;   // ‖SX − Φ‖_F / ‖Φ‖_F

  const Matrix& s(std::size_t path, std::size_t node) const { return S[path * nodes + node]; }
  const Matrix& x(std::size_t path, std::size_t node) const { return X[path * nodes + node]; }
};

/// Gram–Schmidt QR Φ = S·X at every stored node with positive diagonal of X.
TriangularizationResult triangularize_paths(const FundamentalEnsemble& ens);

struct InvarianceReport {
  /// max over nodes and canonical v of |‖Xv‖ − ‖Φv‖| / max(1, ‖Φv‖).
  double max_norm_discrepancy = 0.0;
  /// max over nodes of |tr XᵀX − tr ΦᵀΦ| / max(1, tr ΦᵀΦ).
  double max_trace_discrepancy = 0.0;
  /// Mean over paths of ‖X‖²_F and ‖Φ‖²_F per node.
  std::vector<double> moment_x;
  std::vector<double> moment_phi;
};

InvarianceReport unitary_invariance_check(const FundamentalEnsemble& ens,
                                          const TriangularizationResult& result);

}  // namespace msd
