#pragma once

// Linear Itô systems du = A(t)u dt + G(t)u dω driven by one scalar Brownian
// motion, their adjoints, nonlinear perturbations and a small gallery.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "msd/expr.hpp"
#include "msd/linalg.hpp"

namespace msd {

using ExprMatrix = std::vector<std::vector<Expr>>;

class LinearSde {
 public:
  /// Validates shapes (both n×n, n in [1, 16]) and that every free parameter is bound.
  LinearSde(ExprMatrix A, ExprMatrix G, ParamMap params);

  static LinearSde from_strings(const std::vector<std::vector<std::string>>& A,
                                const std::vector<std::vector<std::string>>& G, ParamMap params);

  std::size_t dim() const noexcept { return A_.size(); }
  const ExprMatrix& drift() const noexcept { return A_; }
  const ExprMatrix& diffusion() const noexcept { return G_; }
  const ParamMap& params() const noexcept { return params_; }

  /// Replaces parameter values; every overridden name must already exist.
  LinearSde with_params(const ParamMap& overrides) const;
  /// Same drift with G replaced by zero.
  LinearSde without_diffusion() const;

  Matrix drift_at(double t) const;
  Matrix diffusion_at(double t) const;

 private:
  ExprMatrix A_;
  ExprMatrix G_;
  ParamMap params_;
};

/// Compiled coefficient matrices for repeated evaluation in time loops.
class SdeEvaluator {
 public:
  explicit SdeEvaluator(const LinearSde& sys);

  std::size_t dim() const noexcept { return n_; }
  void drift(double t, Matrix& A) const;
  void diffusion(double t, Matrix& G) const;
  bool autonomous() const noexcept { return autonomous_; }
  bool has_diffusion() const noexcept { return has_diffusion_; }

 private:
  struct Entry {
    Eigen::Index row;
    Eigen::Index col;
    CompiledExpr expr;
  };
  void fill(double t, const std::vector<Entry>& entries, const Matrix& base, Matrix& out) const;

  std::size_t n_;
  Matrix A_const_, G_const_;
  std::vector<Entry> A_var_, G_var_;
  bool autonomous_ = true;
  bool has_diffusion_ = false;
};

/// Adjoint system Ã = (−A + G²)ᵀ, G̃ = −Gᵀ, built symbolically. Its fundamental
/// matrix is Φ⁻ᵀ.
LinearSde adjoint(const LinearSde& sys);

/// Entry (i, j) of A and G vanishes at every sample of [t0, t1] (structural zero
/// literals are accepted without sampling).
bool entry_vanishes(const LinearSde& sys, std::size_t i, std::size_t j, double t0, double t1);
bool is_upper_triangular(const LinearSde& sys, double t0, double t1);
/// Both coefficient matrices are block diagonal with blocks [0, k) and [k, n).
bool is_block_diagonal(const LinearSde& sys, std::size_t k, double t0, double t1);

struct GrowthReport {
  double max_log_plus_A = 0.0;
  double max_log_plus_G = 0.0;
  double trend_A = 0.0;
  double trend_G = 0.0;
  bool consistent = true;
  std::string flag;
  std::vector<double> times;
  std::vector<double> norm_A;
  std::vector<double> norm_G;
};

/// Advisory check of limsup (1/t) log⁺‖A(t)‖ = 0 style growth. Samples the
/// Frobenius norms on a log-spaced grid [start, horizon]; the trend is the
/// increase of the running maximum of log⁺‖·‖ between the lower and upper half
/// of the grid per unit log t, which ignores bounded oscillation.
GrowthReport validate_growth(const LinearSde& sys, double horizon, std::size_t samples,
                             double start = 0.0);

// ------------------------------------------------------------ perturbations

struct PerturbationSpec {
  enum class Kind { power_clipped, expr };
  Kind kind = Kind::power_clipped;
  // power_clipped: f(t,u) = f_coefficient·u·min(‖u‖, radius)^(exponent−1), same for h.
  double f_coefficient = 0.0;
  double h_coefficient = 0.0;
  double exponent = 3.0;
  double radius = 1.0;
  // expr: entries are expressions in t, u1..un and the base parameters.
  std::vector<Expr> f;
  std::vector<Expr> h;
  // Declared constants of the mean-square smallness condition.
  double c = 1.0;
  double q = 2.0;

  static PerturbationSpec zero(double c = 1.0, double q = 2.0);
  static PerturbationSpec power(double f_coefficient, double h_coefficient, double exponent,
                                double radius, double c, double q);
  static PerturbationSpec expressions(std::vector<Expr> f, std::vector<Expr> h, double c, double q);

  bool is_zero() const;
};

/// Variable names u1..un used by expression perturbations.
std::vector<std::string> state_variable_names(std::size_t n);

class PerturbedSde {
 public:
  /// Validates c > 0, q > 1, dimensions, and f(t,0) = h(t,0) = 0 (by evaluation at `t_check`).
  PerturbedSde(LinearSde base, PerturbationSpec perturbation, double t_check = 1.0);

  const LinearSde& base() const noexcept { return base_; }
  const PerturbationSpec& perturbation() const noexcept { return spec_; }

 private:
  LinearSde base_;
  PerturbationSpec spec_;
};

class PerturbationEvaluator {
 public:
  PerturbationEvaluator(const PerturbationSpec& spec, const ParamMap& params, std::size_t n);

  void eval(double t, const Vector& u, Vector& f, Vector& h) const;
  bool zero() const noexcept { return zero_; }

 private:
  PerturbationSpec::Kind kind_;
  double f_coefficient_, h_coefficient_, exponent_, radius_;
  std::vector<CompiledExpr> f_, h_;
  std::size_t n_;
  bool zero_;
};

// ------------------------------------------------------------------ gallery

struct GalleryItem {
  std::string name;
  std::string description;
  LinearSde system;
  std::optional<PerturbationSpec> perturbation;
  /// Recommended start of the analysis window (log t entries need t0 > 0).
  double t0 = 0.0;
  std::vector<std::string> warnings;
};

std::span<const std::string_view> gallery_names();
/// Names the first violated inequality of 0 < b < a < (2e^{−π}+1)b and
/// 0 < λ < 2b/(a−b) − e^π, or returns nullopt when all hold.
std::optional<std::string> perron_constraint_violation(double a, double b, double lambda);
GalleryItem gallery(std::string_view name, const ParamMap& overrides = {});

// ---------------------------------------------------------------------- JSON

nlohmann::json system_to_json(const LinearSde& sys);
LinearSde system_from_json(const nlohmann::json& j);
nlohmann::json perturbation_to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_from_json(const nlohmann::json& j);

}  // namespace msd
