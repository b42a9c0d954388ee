#pragma once

// Dichotomy surfaces E‖Φ(t)P̃Φ⁻¹(s)‖², envelope fits K·e^{−α|t−s|+βs},
// nonuniformity witnesses, exponent predictions, similarity propagation and
// the projector-commuting decoupling check.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "msd/engines.hpp"
#include "msd/lyapunov.hpp"
#include "msd/sde.hpp"

namespace msd {

struct SurfacePoint {
  double s = 0.0;
  double t = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
  /// log(value), kept separately so that under- and overflowing moments still
  /// carry information; NaN means "use log(value)".
  double log_value = std::numeric_limits<double>::quiet_NaN();

  double log_moment() const { return std::isnan(log_value) ? std::log(value) : log_value; }
};

struct MomentSurface {
  std::vector<SurfacePoint> points;
  std::string method;  // "ode" or "mc"
};

enum class SurfaceMethod { automatic, ode, mc };

struct SurfaceOptions {
  SurfaceMethod method = SurfaceMethod::automatic;
  /// Moment ODE step, or Monte Carlo step.
  double dt = 1e-3;
  std::size_t paths = 1000;
  std::uint64_t seed = 1;
  /// Monte Carlo: every s and t must be a multiple of this spacing away from
  /// the smallest time in the grid (0 means dt).
  double node_spacing = 0.0;
};

/// P̃ for pairs with t ≥ s, Q̃ for t < s. The automatic method uses the moment
/// ODE when there is no projector or the system is block diagonal with respect
/// to it, and Monte Carlo otherwise; requesting the ODE for a non-conformal
/// projector is an error.
MomentSurface dichotomy_surface(const LinearSde& sys, const std::optional<Projector>& projector,
                                const std::vector<std::pair<double, double>>& pairs,
                                const SurfaceOptions& options = {});

/// Rectangular grid of (s, t) pairs with t = s + τ for every offset τ.
std::vector<std::pair<double, double>> surface_grid(const std::vector<double>& s_values,
                                                    const std::vector<double>& offsets);

enum class Sense { stable, unstable, contraction };

struct FitOptions {
  std::size_t alpha_steps = 200;
  std::size_t beta_steps = 200;
  double beta_weight = 0.01;
  double alpha_weight = 0.02;
  /// Points with value ≥ tight_ratio·bound are listed as tight.
  double tight_ratio = 0.99;
};

struct DichotomyFit {
  std::size_t rank = 0;
  double K = 1.0;
  double log_K = 0.0;  // finite even when K overflows
  double alpha = 0.0;
  double beta = 0.0;
  Sense sense = Sense::stable;
  /// max over points of value/bound − 1 (≤ 1e−9 by the envelope property).
  double residual_max = 0.0;
  std::vector<std::pair<double, double>> tight_points;
  bool uniform = false;
  double alpha_max = 0.0;
  double beta_max = 0.0;
  double alpha_step = 0.0;
  double beta_step = 0.0;

  double bound(double s, double t) const;
};

/// Stable and contraction senses use the points with t ≥ s, unstable those with
/// t ≤ s; the exponent is −α|t − s| + βs. Lattice search with α in
/// (0, α_max], α_max the steepest decay seen from the smallest offset at each
/// s, and for each α, β in [0, β_max(α)], β_max(α) the steepest growth in s of
/// log v + α|t − s| measured from the smallest s. K is the smallest admissible
/// constant; the objective is log K + beta_weight·β − alpha_weight·α and ties
/// go to the smallest indices.
DichotomyFit fit_envelope(const MomentSurface& surface, Sense sense, std::size_t rank = 0,
                          const FitOptions& options = {});

struct UniformWitness {
  std::vector<std::pair<double, double>> k_uniform;  // (s, K_u(s))
  double growth_ratio = 1.0;                         // max K_u / min K_u
  std::string flag;                                  // "uniform" or "nonuniform"
  double alpha = 0.0;
};

/// K_u(s) = max over t of value·e^{α|t−s|}; ratio above 1e3 flags "nonuniform".
UniformWitness uniform_witness(const MomentSurface& surface, double alpha);

struct ExponentPrediction {
  double alpha = 0.0;
  /// min{−(χ_k + ε), χ_{k+1} + ε} for the dichotomy form; equals alpha otherwise.
  double alpha_min_gap = 0.0;
  std::optional<double> beta;
  std::size_t k = 0;
};

/// Dichotomy: α = max{−(χ_k + ε), χ_{k+1} + ε} with 1 ≤ k < r. Contraction:
/// α = −(χ_max + ε) with every χ negative. β = γ + 2ε when γ is given.
ExponentPrediction predicted_exponent(const SpectrumEstimate& spectrum, double epsilon,
                                      bool contraction = false,
                                      std::optional<double> gamma = std::nullopt);

/// (K·M², α − β_S, β + 2β_S); β_S defaults to the fit's β.
DichotomyFit similarity_propagate(const DichotomyFit& fit, double M,
                                  std::optional<double> beta_s = std::nullopt);

struct DecouplingReport {
  double max_commutator = 0.0;           // ‖P̃R − RP̃‖_F
  double max_similarity_residual = 0.0;  // ‖SP̃S⁻¹ − ΦP̃Φ⁻¹‖_F / max(1, ‖ΦP̃Φ⁻¹‖_F)
  std::vector<double> mean_s_norm;       // E‖S‖²_op per node
  std::vector<double> se_s_norm;
  std::vector<double> mean_s_inv_norm;   // E‖S⁻¹‖²_op per node
  std::vector<double> se_s_inv_norm;
  std::vector<double> inverse_bound;     // E‖ΦP̃Φ⁻¹‖²_op + E‖ΦQ̃Φ⁻¹‖²_op per node
  double max_mean_s_norm = 0.0;
  bool s_bound_holds = true;             // every mean ≤ 2 + 3·stderr
  bool inverse_bound_holds = true;       // every mean ≤ bound + 3·stderr
};

/// R(t) = spd_sqrt_commuting(ΦᵀΦ, P̃), S = ΦR⁻¹ at every stored node.
DecouplingReport decoupling_check(const FundamentalEnsemble& ens, const Projector& projector);

nlohmann::json fit_to_json(const DichotomyFit& fit);
const char* sense_name(Sense sense);

}  // namespace msd
