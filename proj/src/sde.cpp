#include "msd/sde.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "msd/error.hpp"

namespace msd {

namespace {

constexpr std::size_t kMaxDim = 16;

void check_square(const ExprMatrix& M, std::size_t n, const char* name) {
  if (M.size() != n)
    throw ValidationError(std::string(name) + " must have " + std::to_string(n) + " rows");
  for (const auto& row : M)
    if (row.size() != n)
      throw ValidationError(std::string(name) + " must be " + std::to_string(n) + "x" +
                            std::to_string(n));
}

void check_bound(const ExprMatrix& M, const ParamMap& params, const char* name) {
  for (std::size_t i = 0; i < M.size(); ++i)
    for (std::size_t j = 0; j < M[i].size(); ++j)
      for (const auto& p : M[i][j].parameters())
        if (!params.contains(p))
          throw ValidationError("unbound parameter '" + p + "' in " + name + "[" +
                                std::to_string(i) + "][" + std::to_string(j) + "]");
}

ExprMatrix parse_matrix(const std::vector<std::vector<std::string>>& src) {
  ExprMatrix out;
  out.reserve(src.size());
  for (const auto& row : src) {
    std::vector<Expr> r;
    r.reserve(row.size());
    for (const auto& s : row) r.push_back(Expr::parse(s));
    out.push_back(std::move(r));
  }
  return out;
}

ExprMatrix zeros(std::size_t n) { return ExprMatrix(n, std::vector<Expr>(n)); }

Matrix evaluate(const ExprMatrix& M, double t, const ParamMap& params) {
  const auto n = static_cast<Eigen::Index>(M.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = M[i][j].eval(t, params);
  return out;
}

std::vector<double> sample_times(double t0, double t1) {
  constexpr int kSamples = 65;
  std::vector<double> ts;
  ts.reserve(kSamples);
  for (int k = 0; k < kSamples; ++k) ts.push_back(t0 + (t1 - t0) * k / (kSamples - 1.0));
  return ts;
}

bool vanishes(const Expr& e, const ParamMap& params, const std::vector<double>& ts) {
  if (e.is_zero_literal()) return true;
  try {
    for (double t : ts)
      if (e.eval(t, params) != 0.0) return false;
  } catch (const Error&) {
    return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------- LinearSde

LinearSde::LinearSde(ExprMatrix A, ExprMatrix G, ParamMap params)
    : A_(std::move(A)), G_(std::move(G)), params_(std::move(params)) {
  const std::size_t n = A_.size();
  if (n == 0 || n > kMaxDim)
    throw ValidationError("system dimension must be between 1 and " + std::to_string(kMaxDim));
  check_square(A_, n, "A");
  check_square(G_, n, "G");
  for (const auto& [name, value] : params_)
    if (!std::isfinite(value)) throw ValidationError("parameter '" + name + "' is not finite");
  check_bound(A_, params_, "A");
  check_bound(G_, params_, "G");
}

LinearSde LinearSde::from_strings(const std::vector<std::vector<std::string>>& A,
                                  const std::vector<std::vector<std::string>>& G, ParamMap params) {
  return LinearSde(parse_matrix(A), parse_matrix(G), std::move(params));
}

LinearSde LinearSde::with_params(const ParamMap& overrides) const {
  ParamMap merged = params_;
  for (const auto& [name, value] : overrides) {
    auto it = merged.find(name);
    if (it == merged.end()) throw ValidationError("unknown parameter '" + name + "'");
    it->second = value;
  }
  return LinearSde(A_, G_, std::move(merged));
}

LinearSde LinearSde::without_diffusion() const { return LinearSde(A_, zeros(dim()), params_); }

Matrix LinearSde::drift_at(double t) const { return evaluate(A_, t, params_); }
Matrix LinearSde::diffusion_at(double t) const { return evaluate(G_, t, params_); }

// ------------------------------------------------------------- SdeEvaluator

SdeEvaluator::SdeEvaluator(const LinearSde& sys) : n_(sys.dim()) {
  const auto n = static_cast<Eigen::Index>(n_);
  A_const_ = Matrix::Zero(n, n);
  G_const_ = Matrix::Zero(n, n);
  auto build = [&](const ExprMatrix& M, Matrix& base, std::vector<Entry>& var, bool& nonzero) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Expr& e = M[i][j];
        if (e.is_zero_literal()) continue;
        nonzero = true;
        if (!e.depends_on_time()) {
          base(i, j) = e.eval(0.0, sys.params());
        } else {
          var.push_back({i, j, e.compile(sys.params())});
          autonomous_ = false;
        }
      }
  };
  bool drift_nonzero = false;
  build(sys.drift(), A_const_, A_var_, drift_nonzero);
  build(sys.diffusion(), G_const_, G_var_, has_diffusion_);
}

void SdeEvaluator::fill(double t, const std::vector<Entry>& entries, const Matrix& base,
                        Matrix& out) const {
  out = base;
  for (const auto& e : entries) out(e.row, e.col) = e.expr(t);
}

void SdeEvaluator::drift(double t, Matrix& A) const { fill(t, A_var_, A_const_, A); }
void SdeEvaluator::diffusion(double t, Matrix& G) const { fill(t, G_var_, G_const_, G); }

// ------------------------------------------------------------------ adjoint

LinearSde adjoint(const LinearSde& sys) {
  const std::size_t n = sys.dim();
  const auto& A = sys.drift();
  const auto& G = sys.diffusion();
  ExprMatrix At = zeros(n), Gt = zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // (−A + G²)ᵀ at (i, j) is −A[j][i] + Σ_k G[j][k]·G[k][i].
      std::vector<Expr> terms;
      if (!A[j][i].is_zero_literal()) terms.push_back(-A[j][i]);
      for (std::size_t k = 0; k < n; ++k)
        if (!G[j][k].is_zero_literal() && !G[k][i].is_zero_literal())
          terms.push_back(G[j][k] * G[k][i]);
      if (!terms.empty()) {
        Expr sum = terms.front();
        for (std::size_t m = 1; m < terms.size(); ++m) sum = sum + terms[m];
        At[i][j] = sum;
      }
      if (!G[j][i].is_zero_literal()) Gt[i][j] = -G[j][i];
    }
  }
  return LinearSde(std::move(At), std::move(Gt), sys.params());
}

bool entry_vanishes(const LinearSde& sys, std::size_t i, std::size_t j, double t0, double t1) {
  const auto ts = sample_times(t0, t1);
  return vanishes(sys.drift()[i][j], sys.params(), ts) &&
         vanishes(sys.diffusion()[i][j], sys.params(), ts);
}

bool is_upper_triangular(const LinearSde& sys, double t0, double t1) {
  for (std::size_t i = 1; i < sys.dim(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (!entry_vanishes(sys, i, j, t0, t1)) return false;
  return true;
}

bool is_block_diagonal(const LinearSde& sys, std::size_t k, double t0, double t1) {
  const std::size_t n = sys.dim();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((i < k) != (j < k) && !entry_vanishes(sys, i, j, t0, t1)) return false;
  return true;
}

// ----------------------------------------------------------- growth report

GrowthReport validate_growth(const LinearSde& sys, double horizon, std::size_t samples,
                             double start) {
  if (!(horizon > 0.0)) throw ValidationError("growth check: horizon must be positive");
  if (samples < 2) throw ValidationError("growth check: at least two samples required");
  double lo = start > 0.0 ? start : std::min(1.0, horizon) * 1e-3;
  if (!(lo < horizon)) lo = horizon * 1e-3;
  GrowthReport rep;
  const double l0 = std::log(lo), l1 = std::log(horizon);
  std::vector<double> logp_A, logp_G;
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = std::exp(l0 + (l1 - l0) * static_cast<double>(k) / (samples - 1.0));
    Matrix A, G;
    try {
      A = sys.drift_at(t);
      G = sys.diffusion_at(t);
    } catch (const DomainError& e) {
      throw DomainError(e.subexpression(), std::string(e.what()) + " (at t=" + std::to_string(t) + ")");
    }
    rep.times.push_back(t);
    rep.norm_A.push_back(A.norm());
    rep.norm_G.push_back(G.norm());
    logp_A.push_back(std::max(0.0, std::log(A.norm())));
    logp_G.push_back(std::max(0.0, std::log(G.norm())));
  }
  auto trend = [&](const std::vector<double>& v) {
    const std::size_t half = v.size() / 2;
    const double first = *std::max_element(v.begin(), v.begin() + static_cast<long>(half));
    const double second = *std::max_element(v.begin() + static_cast<long>(half), v.end());
    const double span = std::log(rep.times.back()) - std::log(rep.times[half]);
    return span > 0.0 ? (second - first) / span : 0.0;
  };
  rep.max_log_plus_A = *std::max_element(logp_A.begin(), logp_A.end());
  rep.max_log_plus_G = *std::max_element(logp_G.begin(), logp_G.end());
  rep.trend_A = trend(logp_A);
  rep.trend_G = trend(logp_G);
  rep.consistent = rep.trend_A <= 0.05 && rep.trend_G <= 0.05;
  rep.flag = rep.consistent ? "consistent" : "violates (1.2) as literally written";
  return rep;
}

// ------------------------------------------------------------ perturbations

PerturbationSpec PerturbationSpec::zero(double c, double q) {
  PerturbationSpec s;
  s.c = c;
  s.q = q;
  return s;
}

PerturbationSpec PerturbationSpec::power(double f_coefficient, double h_coefficient,
                                         double exponent, double radius, double c, double q) {
  if (!(exponent >= 2.0)) throw ValidationError("perturbation exponent must be at least 2");
  if (!(radius > 0.0)) throw ValidationError("perturbation clip radius must be positive");
  PerturbationSpec s;
  s.kind = Kind::power_clipped;
  s.f_coefficient = f_coefficient;
  s.h_coefficient = h_coefficient;
  s.exponent = exponent;
  s.radius = radius;
  s.c = c;
  s.q = q;
  return s;
}

PerturbationSpec PerturbationSpec::expressions(std::vector<Expr> f, std::vector<Expr> h, double c,
                                               double q) {
  PerturbationSpec s;
  s.kind = Kind::expr;
  s.f = std::move(f);
  s.h = std::move(h);
  s.c = c;
  s.q = q;
  return s;
}

bool PerturbationSpec::is_zero() const {
  if (kind == Kind::power_clipped) return f_coefficient == 0.0 && h_coefficient == 0.0;
  auto all_zero = [](const std::vector<Expr>& v) {
    return std::all_of(v.begin(), v.end(), [](const Expr& e) { return e.is_zero_literal(); });
  };
  return all_zero(f) && all_zero(h);
}

std::vector<std::string> state_variable_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("u" + std::to_string(i + 1));
  return names;
}

PerturbedSde::PerturbedSde(LinearSde base, PerturbationSpec perturbation, double t_check)
    : base_(std::move(base)), spec_(std::move(perturbation)) {
  if (!(spec_.c > 0.0)) throw ValidationError("perturbation constant c must be positive");
  if (!(spec_.q > 1.0)) throw ValidationError("perturbation exponent q must exceed 1");
  const std::size_t n = base_.dim();
  if (spec_.kind == PerturbationSpec::Kind::expr) {
    if (spec_.f.size() != n || spec_.h.size() != n)
      throw ValidationError("perturbation f and h must have one entry per state component");
    const auto vars = state_variable_names(n);
    for (const auto* list : {&spec_.f, &spec_.h})
      for (const auto& e : *list)
        for (const auto& p : e.parameters())
          if (!base_.params().contains(p) && std::find(vars.begin(), vars.end(), p) == vars.end())
            throw ValidationError("unbound parameter '" + p + "' in perturbation");
    PerturbationEvaluator ev(spec_, base_.params(), n);
    Vector f(n), h(n);
    ev.eval(t_check, Vector::Zero(static_cast<Eigen::Index>(n)), f, h);
    if (f.cwiseAbs().maxCoeff() != 0.0 || h.cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("perturbation must vanish at u = 0 (f(t,0) = h(t,0) = 0)");
  }
}

PerturbationEvaluator::PerturbationEvaluator(const PerturbationSpec& spec, const ParamMap& params,
                                             std::size_t n)
    : kind_(spec.kind),
      f_coefficient_(spec.f_coefficient),
      h_coefficient_(spec.h_coefficient),
      exponent_(spec.exponent),
      radius_(spec.radius),
      n_(n),
      zero_(spec.is_zero()) {
  if (kind_ == PerturbationSpec::Kind::expr) {
    const auto vars = state_variable_names(n);
    for (const auto& e : spec.f) f_.push_back(e.compile(params, vars));
    for (const auto& e : spec.h) h_.push_back(e.compile(params, vars));
  }
}

void PerturbationEvaluator::eval(double t, const Vector& u, Vector& f, Vector& h) const {
  f.setZero(static_cast<Eigen::Index>(n_));
  h.setZero(static_cast<Eigen::Index>(n_));
  if (zero_) return;
  if (kind_ == PerturbationSpec::Kind::power_clipped) {
    const double r = std::min(u.norm(), radius_);
    const double scale = std::pow(r, exponent_ - 1.0);
    f = f_coefficient_ * scale * u;
    h = h_coefficient_ * scale * u;
    return;
  }
  std::span<const double> slots(u.data(), static_cast<std::size_t>(u.size()));
  for (std::size_t i = 0; i < n_; ++i) {
    f(static_cast<Eigen::Index>(i)) = f_[i](t, slots);
    h(static_cast<Eigen::Index>(i)) = h_[i](t, slots);
  }
}

// ------------------------------------------------------------------ gallery

namespace {

constexpr std::array<std::string_view, 6> kGalleryNames{
    "gbm", "perron-ode", "perron-sde", "perron-sde-perturbed", "triangular-2x2", "diag-2x2"};

const char* const kPerronDrift1 = "-a - b*(sin(log(t)) + cos(log(t)))";
const char* const kPerronDrift2 = "-a + b*(sin(log(t)) + cos(log(t)))";

LinearSde perron_sde(const ParamMap& overrides) {
  return LinearSde::from_strings({{kPerronDrift1, "0"}, {"0", kPerronDrift2}},
                                 {{"1/(lambda + 1)", "0"}, {"0", "1"}},
                                 {{"a", 1.05}, {"b", 1.0}, {"lambda", 1.0}})
      .with_params(overrides);
}

void flag_perron(const LinearSde& sys, std::vector<std::string>& warnings) {
  const auto& p = sys.params();
  if (auto v = perron_constraint_violation(p.at("a"), p.at("b"), p.at("lambda")))
    warnings.push_back("parameters violate the instability constraint chain: " + *v);
}

}  // namespace

std::span<const std::string_view> gallery_names() { return kGalleryNames; }

std::optional<std::string> perron_constraint_violation(double a, double b, double lambda) {
  const double upper_a = (2.0 * std::exp(-std::numbers::pi) + 1.0) * b;
  if (!(b > 0.0)) return "0 < b";
  if (!(b < a)) return "b < a";
  if (!(a < upper_a)) return "a < (2e^{-pi} + 1)b = " + std::to_string(upper_a);
  if (!(lambda > 0.0)) return "0 < lambda";
  const double upper_l = 2.0 * b / (a - b) - std::exp(std::numbers::pi);
  if (!(lambda < upper_l)) return "lambda < 2b/(a - b) - e^pi = " + std::to_string(upper_l);
  return std::nullopt;
}

GalleryItem gallery(std::string_view name, const ParamMap& overrides) {
  if (name == "gbm")
    return {"gbm", "scalar geometric Brownian motion du = a u dt + b u dw",
            LinearSde::from_strings({{"a"}}, {{"b"}}, {{"a", -1.0}, {"b", 0.5}}).with_params(overrides),
            std::nullopt, 0.0, {}};
  if (name == "perron-ode")
    return {"perron-ode",
            "deterministic Perron-type system u' = (-a - b t sin t)u, v' = (a + b t sin t)v",
            LinearSde::from_strings({{"-a - b*t*sin(t)", "0"}, {"0", "a + b*t*sin(t)"}},
                                    {{"0", "0"}, {"0", "0"}}, {{"a", 1.05}, {"b", 1.0}})
                .with_params(overrides),
            std::nullopt, 0.0, {}};
  if (name == "perron-sde") {
    GalleryItem item{"perron-sde",
                     "diagonal system with log-time oscillating drift; nonuniform mean-square "
                     "contraction",
                     perron_sde(overrides), std::nullopt, 1.0, {}};
    flag_perron(item.system, item.warnings);
    return item;
  }
  if (name == "perron-sde-perturbed") {
    GalleryItem item{"perron-sde-perturbed",
                     "perron-sde with the forcing u1^(lambda + 1) in the second equation",
                     perron_sde(overrides),
                     PerturbationSpec::expressions({Expr(), Expr::parse("u1^(lambda + 1)")},
                                                   {Expr(), Expr()}, 1.0, 2.0),
                     1.0,
                     {}};
    flag_perron(item.system, item.warnings);
    return item;
  }
  if (name == "triangular-2x2")
    return {"triangular-2x2", "constant upper-triangular system with equal diagonal noise",
            LinearSde::from_strings({{"-1", "1"}, {"0", "-2"}}, {{"0.5", "0"}, {"0", "0.5"}}, {})
                .with_params(overrides),
            std::nullopt, 0.0, {}};
  if (name == "diag-2x2")
    return {"diag-2x2", "constant diagonal system with independent-coefficient noise",
            LinearSde::from_strings({{"a1", "0"}, {"0", "a2"}}, {{"g1", "0"}, {"0", "g2"}},
                                    {{"a1", -1.0}, {"a2", -2.0}, {"g1", 0.5}, {"g2", 0.3}})
                .with_params(overrides),
            std::nullopt, 0.0, {}};
  throw ValidationError("unknown gallery system '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------- JSON

namespace {

nlohmann::json matrix_to_json(const ExprMatrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : M) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& e : row) r.push_back(e.to_string());
    rows.push_back(std::move(r));
  }
  return rows;
}

ExprMatrix matrix_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw ValidationError(std::string("system field '") + name + "' must be an array");
  ExprMatrix out;
  for (const auto& row : j) {
    if (!row.is_array()) throw ValidationError(std::string("rows of '") + name + "' must be arrays");
    std::vector<Expr> r;
    for (const auto& e : row) {
      if (e.is_string())
        r.push_back(Expr::parse(e.get<std::string>()));
      else if (e.is_number())
        r.push_back(Expr::number(e.get<double>()));
      else
        throw ValidationError(std::string("entries of '") + name + "' must be strings or numbers");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Expr> vector_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw ValidationError(std::string("perturbation field '") + name + "' must be an array");
  std::vector<Expr> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw ValidationError("perturbation entries must be strings");
    out.push_back(Expr::parse(e.get<std::string>()));
  }
  return out;
}

double number_field(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json system_to_json(const LinearSde& sys) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : sys.params()) params[k] = v;
  return {{"dim", sys.dim()},
          {"params", params},
          {"A", matrix_to_json(sys.drift())},
          {"G", matrix_to_json(sys.diffusion())}};
}

LinearSde system_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("system JSON must be an object");
  for (const char* key : {"dim", "A", "G"})
    if (!j.contains(key)) throw ValidationError(std::string("system JSON is missing '") + key + "'");
  if (!j.at("dim").is_number_integer()) throw ValidationError("system field 'dim' must be an integer");
  ParamMap params;
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ValidationError("system field 'params' must be an object");
    for (const auto& [k, v] : j.at("params").items()) {
      if (!v.is_number()) throw ValidationError("parameter '" + k + "' must be a number");
      params[k] = v.get<double>();
    }
  }
  LinearSde sys(matrix_from_json(j.at("A"), "A"), matrix_from_json(j.at("G"), "G"), std::move(params));
  if (j.at("dim").get<long long>() != static_cast<long long>(sys.dim()))
    throw ValidationError("system field 'dim' does not match the matrix size");
  return sys;
}

nlohmann::json perturbation_to_json(const PerturbationSpec& spec) {
  if (spec.kind == PerturbationSpec::Kind::power_clipped)
    return {{"kind", "power_clipped"}, {"f_coefficient", spec.f_coefficient},
            {"h_coefficient", spec.h_coefficient}, {"exponent", spec.exponent},
            {"radius", spec.radius}, {"c", spec.c}, {"q", spec.q}};
  nlohmann::json f = nlohmann::json::array(), h = nlohmann::json::array();
  for (const auto& e : spec.f) f.push_back(e.to_string());
  for (const auto& e : spec.h) h.push_back(e.to_string());
  return {{"kind", "expr"}, {"f", f}, {"h", h}, {"c", spec.c}, {"q", spec.q}};
}

PerturbationSpec perturbation_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw ValidationError("perturbation JSON must be an object with a 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  const double c = number_field(j, "c", 1.0), q = number_field(j, "q", 2.0);
  if (kind == "power_clipped")
    return PerturbationSpec::power(number_field(j, "f_coefficient", 0.0),
                                   number_field(j, "h_coefficient", 0.0),
                                   number_field(j, "exponent", 3.0), number_field(j, "radius", 1.0),
                                   c, q);
  if (kind == "expr") {
    if (!j.contains("f") || !j.contains("h")) throw ValidationError("expr perturbation needs 'f' and 'h'");
    return PerturbationSpec::expressions(vector_from_json(j.at("f"), "f"),
                                         vector_from_json(j.at("h"), "h"), c, q);
  }
  throw ValidationError("unknown perturbation kind '" + kind + "'");
}

}  // namespace msd
