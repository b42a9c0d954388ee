// msd: command-line front end for the mean-square dichotomy library.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msd/acceptance.hpp"
#include "msd/bounds.hpp"
#include "msd/dichotomy.hpp"
#include "msd/engines.hpp"
#include "msd/error.hpp"
#include "msd/io.hpp"
#include "msd/lyapunov.hpp"
#include "msd/parallel.hpp"
#include "msd/perturb.hpp"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

struct Common {
  std::string system = "gbm";
  std::vector<std::string> params;
  std::string format = "json";
  std::string output;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
};

struct Loaded {
  std::string name;
  msd::LinearSde system;
  std::optional<msd::PerturbationSpec> perturbation;
  double t0 = 0.0;
};

msd::ParamMap parse_params(const std::vector<std::string>& items) {
  msd::ParamMap out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw msd::ValidationError("--param expects name=value, got '" + item + "'");
    const std::string value = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw msd::ValidationError("--param value is not a number: '" + item + "'");
    out[item.substr(0, eq)] = v;
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw msd::ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw msd::ValidationError("invalid JSON in '" + path + "': " + e.what());
  }
}

bool is_gallery_name(const std::string& s) {
  for (const auto name : msd::gallery_names())
    if (name == s) return true;
  return false;
}

// A gallery name or a system JSON file (optionally carrying "perturbation" and "t0").
Loaded load_system(const Common& c) {
  const auto overrides = parse_params(c.params);
  if (is_gallery_name(c.system)) {
    auto item = msd::gallery(c.system, overrides);
    for (const auto& w : item.warnings) std::cerr << "warning: " << w << '\n';
    return {item.name, item.system, item.perturbation, item.t0};
  }
  const json j = read_json_file(c.system);
  Loaded out{c.system, msd::system_from_json(j).with_params(overrides), std::nullopt, 0.0};
  if (j.contains("perturbation")) out.perturbation = msd::perturbation_from_json(j.at("perturbation"));
  if (j.contains("t0")) out.t0 = j.at("t0").get<double>();
  return out;
}

void emit(const Common& c, const std::string& text) {
  if (c.output.empty() || c.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(c.output, std::ios::binary);
  if (!out) throw msd::ValidationError("cannot write '" + c.output + "'");
  out << text;
}

void emit_json(const Common& c, const json& j) { emit(c, j.dump(2) + "\n"); }

msd::Vector to_vector(const std::vector<double>& v, std::size_t n) {
  if (v.size() != n) throw msd::ValidationError("--u0 needs " + std::to_string(n) + " components");
  msd::Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  if (out.norm() == 0.0) throw msd::ValidationError("--u0 must be nonzero");
  return out;
}

json vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

msd::SurfaceMethod surface_method(const std::string& m) {
  if (m == "auto") return msd::SurfaceMethod::automatic;
  if (m == "ode") return msd::SurfaceMethod::ode;
  return msd::SurfaceMethod::mc;
}

// ------------------------------------------------------------------ example

struct ExampleArgs {
  std::string action;
  std::string name;
};

int run_example(const Common& c, const ExampleArgs& a) {
  if (a.action == "list") {
    if (c.format == "json") {
      json names = json::array();
      for (const auto name : msd::gallery_names()) names.push_back(std::string(name));
      emit_json(c, {{"systems", names}});
    } else {
      std::string text;
      for (const auto name : msd::gallery_names()) text += std::string(name) + '\n';
      emit(c, text);
    }
    return 0;
  }
  if (a.name.empty()) throw msd::ValidationError("example show needs a system name");
  const auto item = msd::gallery(a.name, parse_params(c.params));
  emit_json(c, {{"name", item.name},
                {"description", item.description},
                {"t0", item.t0},
                {"system", msd::system_to_json(item.system)},
                {"perturbation", item.perturbation ? msd::perturbation_to_json(*item.perturbation) : json(nullptr)},
                {"warnings", item.warnings}});
  return 0;
}

// ------------------------------------------------------------------ moments

struct MomentsArgs {
  std::optional<double> t0;
  double t1 = 1.0;
  double dt = 1e-3;
  std::string method = "ode";
  std::size_t paths = 10000;
  std::size_t store_every = 1;
  std::vector<double> u0;
  std::vector<double> s_values;
  std::vector<double> offsets;
  std::optional<std::size_t> rank;
};

int run_moments(const Common& c, const MomentsArgs& a) {
  const auto sys = load_system(c);
  const std::size_t n = sys.system.dim();
  const double t0 = a.t0.value_or(sys.t0);

  if (!a.s_values.empty()) {
    if (a.offsets.empty()) throw msd::ValidationError("--s-values needs --offsets");
    std::optional<msd::Projector> P;
    if (a.rank) P = msd::Projector(n, *a.rank);
    msd::SurfaceOptions so;
    so.method = a.method == "mc" ? msd::SurfaceMethod::mc : msd::SurfaceMethod::ode;
    so.dt = a.dt;
    so.paths = a.paths;
    so.seed = c.seed;
    const auto surf = msd::dichotomy_surface(sys.system, P, msd::surface_grid(a.s_values, a.offsets), so);
    if (c.format == "csv")
      emit(c, msd::surface_to_csv(surf));
    else
      emit_json(c, {{"system", sys.name}, {"kind", "surface"}, {"surface", msd::surface_to_json(surf)}});
    return 0;
  }

  if (!(a.t1 > t0)) throw msd::ValidationError("--t1 must exceed --t0");
  msd::MomentCurve curve;
  if (a.method == "ode") {
    msd::Matrix P0 = msd::Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (!a.u0.empty()) {
      const auto v = to_vector(a.u0, n);
      P0 = v * v.transpose();
    }
    curve = msd::moment_ode(sys.system, P0, t0, a.t1, a.dt).curve;
    if (a.store_every > 1) {
      msd::MomentCurve thinned;
      for (std::size_t i = 0; i < curve.size(); ++i)
        if (i % a.store_every == 0 || i + 1 == curve.size()) thinned.push_back(curve[i]);
      curve.swap(thinned);
    }
  } else {
    const auto grid = msd::TimeGrid::covering(t0, a.t1, a.dt);
    if (grid.steps() % a.store_every != 0)
      throw msd::ValidationError("--store-every must divide the number of steps (" + std::to_string(grid.steps()) + ")");
    if (!a.u0.empty()) {
      curve = msd::mc_moment_curve(sys.system, to_vector(a.u0, n), grid, a.paths, c.seed, a.store_every);
    } else {
      const auto ens = msd::simulate_fundamental(sys.system, grid, a.paths, c.seed, {msd::Scheme::milstein, a.store_every});
      const auto stored = ens.stored_grid();
      for (std::size_t k = 0; k < ens.nodes(); ++k) {
        const auto e = msd::mc_second_moment(ens, 0, k, std::nullopt, msd::InverseSide::none);
        curve.push_back({stored.time(k), e.value, std::log(e.value), e.std_error, k == 0});
      }
    }
  }
  if (c.format == "csv")
    emit(c, msd::curve_to_csv(curve));
  else
    emit_json(c, {{"system", sys.name}, {"kind", "curve"}, {"method", a.method}, {"curve", msd::curve_to_json(curve)}});
  return 0;
}

// ---------------------------------------------------------------- lyapunov

struct LyapunovArgs {
  std::optional<double> t0;
  double horizon = 50.0;
  double dt = 1e-2;
  std::string method = "ode";
  std::size_t paths = 10000;
  std::size_t trials = 0;
  std::vector<double> u0;
  bool duality = false;
};

int run_lyapunov(const Common& c, const LyapunovArgs& a) {
  const auto sys = load_system(c);
  const std::size_t n = sys.system.dim();
  msd::ChiOptions co;
  co.method = a.method == "mc" ? msd::ExponentMethod::mc : msd::ExponentMethod::ode;
  co.t0 = a.t0.value_or(sys.t0);
  co.dt = a.dt;
  co.paths = a.paths;
  co.seed = c.seed;
  json out{{"system", sys.name}, {"horizon", a.horizon}, {"method", a.method}};
  if (!a.u0.empty()) {
    const auto est = msd::chi_estimate(sys.system, to_vector(a.u0, n), a.horizon, co);
    json tail = json::array();
    for (const auto& [t, v] : est.tail_values) tail.push_back({t, v});
    out["chi"] = {{"value", est.chi}, {"std_error", est.std_error}, {"tail", tail}};
  } else {
    const std::size_t trials = a.trials ? a.trials : 2 * n + 2;
    const auto s = msd::spectrum(sys.system, a.horizon, trials, co);
    out["spectrum"] = {{"values", vector_json(s.values)},
                       {"multiplicities", s.multiplicities},
                       {"split", s.split},
                       {"cluster_tolerance", s.cluster_tolerance},
                       {"canonical_chi", vector_json(s.canonical_chi)},
                       {"random_chi", vector_json(s.random_chi)},
                       {"outliers", vector_json(s.outliers)}};
  }
  if (a.duality) {
    msd::DualityOptions d;
    d.seed = c.seed;
    const auto pair = msd::canonical_pair(n);
    const auto rep = msd::duality_defect(sys.system, pair.basis, pair.dual_basis, a.horizon, co, d);
    out["duality"] = {{"chi", vector_json(rep.chi)},
                      {"chi_dual", vector_json(rep.chi_dual)},
                      {"sums", vector_json(rep.sums)},
                      {"all_nonnegative", rep.all_nonnegative},
                      {"tolerance", rep.tolerance},
                      {"pathwise_drift", rep.pathwise_drift}};
  }
  emit_json(c, out);
  return 0;
}

// -------------------------------------------------------------- regularity

struct RegularityArgs {
  std::optional<double> t0;
  double horizon = 100.0;
  double bounds_horizon = 1e4;
  double dt = 1e-2;
};

int run_regularity(const Common& c, const RegularityArgs& a) {
  const auto sys = load_system(c);
  const double t0 = a.t0.value_or(sys.t0);
  msd::ChiOptions co;
  co.t0 = t0;
  co.dt = a.dt;
  co.seed = c.seed;
  const auto est = msd::regularity_estimate(sys.system, {msd::canonical_pair(sys.system.dim())}, a.horizon, co);
  msd::AverageOptions ao;
  ao.t0 = t0;
  const auto avg = msd::diagonal_averages(sys.system, a.bounds_horizon, ao);
  std::optional<double> upper;
  if (msd::is_upper_triangular(sys.system, t0, t0 + a.bounds_horizon)) upper = msd::upper_bound(avg);
  emit_json(c, {{"system", sys.name},
                {"regularity",
                 {{"gamma_upper_estimate", est.gamma_upper_estimate},
                  {"pair_sums", est.pair_sums},
                  {"basis", est.basis_description},
                  {"horizon", a.horizon}}},
                {"bounds", msd::bounds_to_json(avg, msd::lower_bound(avg), upper)}});
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::optional<std::size_t> rank;
  std::string sense;
  std::vector<double> s_values;
  std::vector<double> offsets;
  std::string method = "auto";
  double dt = 1e-3;
  std::size_t paths = 1000;
  std::string surface_out;
};

int run_fit(const Common& c, const FitArgs& a) {
  const auto sys = load_system(c);
  const std::size_t n = sys.system.dim();
  const std::size_t rank = a.rank.value_or(n);
  if (rank > n) throw msd::ValidationError("--rank exceeds the dimension");
  msd::Sense sense = rank == n ? msd::Sense::contraction : msd::Sense::stable;
  if (a.sense == "stable") sense = msd::Sense::stable;
  if (a.sense == "unstable") sense = msd::Sense::unstable;
  if (a.sense == "contraction") sense = msd::Sense::contraction;

  std::vector<double> s_values = a.s_values, offsets = a.offsets;
  if (s_values.empty())
    for (int i = 0; i <= 4; ++i) s_values.push_back(sys.t0 + 0.5 * i);
  if (offsets.empty())
    for (int j = 0; j <= 20; ++j) offsets.push_back(0.25 * j);
  std::optional<msd::Projector> P;
  if (rank < n) P = msd::Projector(n, rank);
  msd::SurfaceOptions so;
  so.method = surface_method(a.method);
  so.dt = a.dt;
  so.paths = a.paths;
  so.seed = c.seed;
  const auto surf = msd::dichotomy_surface(sys.system, P, msd::surface_grid(s_values, offsets), so);
  if (!a.surface_out.empty()) {
    std::ofstream out(a.surface_out, std::ios::binary);
    if (!out) throw msd::ValidationError("cannot write '" + a.surface_out + "'");
    out << msd::surface_to_csv(surf);
  }
  if (c.format == "csv") {
    emit(c, msd::surface_to_csv(surf));
    return 0;
  }
  const auto fit = msd::fit_envelope(surf, sense, rank);
  json witness = nullptr;
  if (s_values.size() > 1) {
    const auto w = msd::uniform_witness(surf, fit.alpha);
    json ks = json::array();
    for (const auto& [s, k] : w.k_uniform) ks.push_back({s, std::isfinite(k) ? json(k) : json(nullptr)});
    witness = {{"k_uniform", ks}, {"growth_ratio", w.growth_ratio}, {"flag", w.flag}, {"alpha", w.alpha}};
  }
  emit_json(c, {{"system", sys.name},
                {"sense", msd::sense_name(sense)},
                {"method", surf.method},
                {"fit", msd::fit_to_json(fit)},
                {"witness", witness}});
  return 0;
}

// ----------------------------------------------------------- triangularize

struct TriangularizeArgs {
  std::optional<double> t0;
  double t1 = 1.0;
  double dt = 1e-3;
  std::size_t paths = 20;
  std::size_t store_every = 100;
};

int run_triangularize(const Common& c, const TriangularizeArgs& a) {
  const auto sys = load_system(c);
  const double t0 = a.t0.value_or(sys.t0);
  if (!(a.t1 > t0)) throw msd::ValidationError("--t1 must exceed --t0");
  const auto grid = msd::TimeGrid::covering(t0, a.t1, a.dt);
  if (grid.steps() % a.store_every != 0)
    throw msd::ValidationError("--store-every must divide the number of steps (" + std::to_string(grid.steps()) + ")");
  const auto ens = msd::simulate_fundamental(sys.system, grid, a.paths, c.seed, {msd::Scheme::milstein, a.store_every});
  const auto res = msd::triangularize_paths(ens);
  const auto inv = msd::unitary_invariance_check(ens, res);
  const auto stored = ens.stored_grid();
  if (c.format == "csv") {
    std::string text = "t,moment_x,moment_phi\n";
    for (std::size_t k = 0; k < ens.nodes(); ++k)
      text += msd::format_number(stored.time(k)) + ',' + msd::format_number(inv.moment_x[k]) + ',' +
              msd::format_number(inv.moment_phi[k]) + '\n';
    emit(c, text);
    return 0;
  }
  json moments = json::array();
  for (std::size_t k = 0; k < ens.nodes(); ++k)
    moments.push_back({{"t", stored.time(k)}, {"moment_x", inv.moment_x[k]}, {"moment_phi", inv.moment_phi[k]}});
  emit_json(c, {{"system", sys.name},
                {"paths", res.paths},
                {"nodes", res.nodes},
                {"max_unitarity_defect", res.max_unitarity_defect},
                {"max_lower_entry", res.max_lower_entry},
                {"max_relative_residual", res.max_relative_residual},
                {"max_norm_discrepancy", inv.max_norm_discrepancy},
                {"max_trace_discrepancy", inv.max_trace_discrepancy},
                {"moments", moments}});
  return 0;
}

// ----------------------------------------------------------------- perturb

struct PerturbArgs {
  std::string mode = "stability";
  std::string perturbation;
  std::optional<double> f_coefficient, h_coefficient;
  double exponent = 3.0, radius = 1.0, c = 9.0, q = 2.0;
  // condition check
  double scale = 0.3;
  std::size_t trials = 1000;
  std::size_t samples = 256;
  // stability experiment
  double delta = 0.01;
  double horizon = 10.0;
  std::size_t paths = 2000;
  double dt = 1e-3;
  double epsilon = 0.05;
  std::optional<double> t0;
};

int run_perturb(const Common& c, const PerturbArgs& a) {
  const auto sys = load_system(c);
  msd::PerturbationSpec spec;
  if (!a.perturbation.empty()) {
    spec = msd::perturbation_from_json(read_json_file(a.perturbation));
  } else if (a.f_coefficient || a.h_coefficient) {
    spec = msd::PerturbationSpec::power(a.f_coefficient.value_or(0.0), a.h_coefficient.value_or(0.0), a.exponent,
                                        a.radius, a.c, a.q);
  } else if (sys.perturbation) {
    spec = *sys.perturbation;
  } else {
    throw msd::ValidationError("no perturbation: pass --perturbation FILE or --f-coefficient/--h-coefficient");
  }
  const double t0 = a.t0.value_or(sys.t0);

  if (a.mode == "condition") {
    const auto rep = msd::check_condition(spec, sys.system.dim(), sys.system.params(), a.scale, a.trials, c.seed,
                                          std::max(t0, 1.0), a.samples);
    emit_json(c, {{"system", sys.name},
                  {"mode", "condition"},
                  {"scale", a.scale},
                  {"max_ratio", rep.max_ratio},
                  {"consistent", rep.consistent},
                  {"trials", rep.trials},
                  {"violations", rep.violations},
                  {"verdict", rep.verdict},
                  {"worst", rep.worst}});
    return 0;
  }
  const msd::PerturbedSde psys(sys.system, spec, std::max(t0, 1.0));
  msd::StabilityOptions so;
  so.t0 = t0;
  so.dt = a.dt;
  so.epsilon = a.epsilon;
  const auto rep = msd::stability_experiment(psys, a.delta, a.horizon, a.paths, c.seed, so);
  if (c.format == "csv") {
    emit(c, msd::curve_to_csv(rep.curve));
    return 0;
  }
  json j = msd::stability_to_json(rep);
  j["system"] = sys.name;
  j["mode"] = "stability";
  j["curve"] = msd::curve_to_json(rep.curve);
  emit_json(c, j);
  return 0;
}

// ------------------------------------------------------------------ perron

struct PerronArgs {
  double a = 1.05, b = 1.0, lambda = 1.0;
  double delta = 0.01;
  double horizon = 1e4;
  std::size_t paths = 1000;
  double stochastic_horizon = 20.0;
  double dt = 1e-3;
};

int run_perron(const Common& c, const PerronArgs& a) {
  msd::PerronOptions o;
  o.stochastic_horizon = a.stochastic_horizon;
  o.dt = a.dt;
  const auto rep = msd::perron_instability(a.a, a.b, a.lambda, a.delta, a.horizon, a.paths, c.seed, o);
  if (c.format == "csv") {
    std::string text = "t,chi\n";
    for (const auto& [t, chi] : rep.deterministic_tail) text += msd::format_number(t) + ',' + msd::format_number(chi) + '\n';
    emit(c, text);
    return 0;
  }
  json j = msd::perron_to_json(rep);
  json tail = json::array();
  for (const auto& [t, chi] : rep.deterministic_tail) tail.push_back({t, chi});
  j["deterministic_tail"] = tail;
  emit_json(c, j);
  return 0;
}

// ---------------------------------------------------------------- selftest

int run_selftest(const Common& c) {
  msd::AcceptanceOptions o;
  o.seed = c.seed;
  o.on_result = [](const msd::CriterionResult& r) {
    std::cerr << "criterion " << r.id << " took " << r.seconds << " s\n";
  };
  const auto results = msd::run_acceptance(o);
  bool all = true;
  for (const auto& r : results) all = all && r.pass;
  if (c.format == "json") {
    json items = json::array();
    for (const auto& r : results)
      items.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"detail", r.detail}});
    emit_json(c, {{"seed", c.seed}, {"criteria", items}, {"passed", all}});
  } else {
    std::string text;
    for (const auto& r : results) text += msd::format_result(r) + '\n';
    emit(c, text);
  }
  return all ? 0 : kExitNumeric;
}

void print_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::size_t default_threads() {
  if (const char* env = std::getenv("MSD_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Adds the options every analysis subcommand shares.
void add_common(CLI::App* sub, Common& c, bool system, std::vector<std::string> formats) {
  if (system)
    sub->add_option("--system", c.system, "gallery name or system JSON file")->capture_default_str();
  if (system) sub->add_option("--param", c.params, "parameter override name=value (repeatable)");
  sub->add_option("--format", c.format, "output format: " + CLI::detail::join(formats, " | "))
      ->check(CLI::IsMember(formats));
  sub->add_option("--output,-o", c.output, "output file (default stdout)");
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker cap (default MSD_THREADS or the core count)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-square dichotomy analysis of linear Ito SDEs", "msd"};
  app.require_subcommand(1);
  Common common;

  ExampleArgs ex;
  auto* example = app.add_subcommand("example", "list or show gallery systems");
  example->add_option("action", ex.action, "list | show")->required()->check(CLI::IsMember({"list", "show"}));
  example->add_option("name", ex.name, "gallery name (for show)");
  add_common(example, common, false, {"text", "json"});
  example->add_option("--param", common.params, "parameter override name=value (repeatable)");

  MomentsArgs mo;
  auto* moments = app.add_subcommand("moments", "second-moment curves and surfaces");
  add_common(moments, common, true, {"json", "csv"});
  moments->add_option("--t0", mo.t0, "start time (default: the system's recommended start)");
  moments->add_option("--t1", mo.t1, "end time")->capture_default_str();
  moments->add_option("--dt", mo.dt, "step")->capture_default_str()->check(CLI::PositiveNumber);
  moments->add_option("--method", mo.method, "ode or mc")->check(CLI::IsMember({"ode", "mc"}))->capture_default_str();
  moments->add_option("--paths", mo.paths, "Monte Carlo paths")->capture_default_str()->check(CLI::PositiveNumber);
  moments->add_option("--store-every", mo.store_every, "keep every k-th step")->capture_default_str()->check(CLI::PositiveNumber);
  moments->add_option("--u0", mo.u0, "initial vector (comma separated; default: Frobenius norm of the fundamental matrix)")
      ->delimiter(',');
  moments->add_option("--s-values", mo.s_values, "surface start times (comma separated)")->delimiter(',');
  moments->add_option("--offsets", mo.offsets, "surface offsets t - s (comma separated, may be negative)")->delimiter(',');
  moments->add_option("--rank", mo.rank, "projector rank for surfaces");

  LyapunovArgs ly;
  auto* lyapunov = app.add_subcommand("lyapunov", "second-moment Lyapunov exponents");
  add_common(lyapunov, common, true, {"json", "csv"});
  lyapunov->add_option("--t0", ly.t0, "start time");
  lyapunov->add_option("--horizon", ly.horizon, "horizon")->capture_default_str()->check(CLI::PositiveNumber);
  lyapunov->add_option("--dt", ly.dt, "step")->capture_default_str()->check(CLI::PositiveNumber);
  lyapunov->add_option("--method", ly.method, "ode or mc")->check(CLI::IsMember({"ode", "mc"}))->capture_default_str();
  lyapunov->add_option("--paths", ly.paths, "Monte Carlo paths")->capture_default_str()->check(CLI::PositiveNumber);
  lyapunov->add_option("--trials", ly.trials, "spectrum trials (default 2n + 2)");
  lyapunov->add_option("--u0", ly.u0, "single initial vector instead of the spectrum")->delimiter(',');
  lyapunov->add_flag("--duality", ly.duality, "add the duality check for the canonical pair");

  RegularityArgs re;
  auto* regularity = app.add_subcommand("regularity", "regularity estimate and coefficient bounds");
  add_common(regularity, common, true, {"json", "csv"});
  regularity->add_option("--t0", re.t0, "start time");
  regularity->add_option("--horizon", re.horizon, "exponent horizon")->capture_default_str()->check(CLI::PositiveNumber);
  regularity->add_option("--bounds-horizon", re.bounds_horizon, "diagonal-average horizon")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  regularity->add_option("--dt", re.dt, "moment ODE step")->capture_default_str()->check(CLI::PositiveNumber);

  FitArgs fi;
  auto* fit = app.add_subcommand("fit", "dichotomy surface, envelope fit and uniformity witness");
  add_common(fit, common, true, {"json", "csv"});
  fit->add_option("--rank", fi.rank, "projector rank (default n: contraction)");
  fit->add_option("--sense", fi.sense, "stable, unstable or contraction")
      ->check(CLI::IsMember({"stable", "unstable", "contraction"}));
  fit->add_option("--s-values", fi.s_values, "start times (comma separated)")->delimiter(',');
  fit->add_option("--offsets", fi.offsets, "offsets t - s (comma separated)")->delimiter(',');
  fit->add_option("--method", fi.method, "auto, ode or mc")->check(CLI::IsMember({"auto", "ode", "mc"}))->capture_default_str();
  fit->add_option("--dt", fi.dt, "step")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--paths", fi.paths, "Monte Carlo paths")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--surface-out", fi.surface_out, "also write the surface as CSV");

  TriangularizeArgs tr;
  auto* triangularize = app.add_subcommand("triangularize", "pathwise QR of the fundamental matrix");
  add_common(triangularize, common, true, {"json", "csv"});
  triangularize->add_option("--t0", tr.t0, "start time");
  triangularize->add_option("--t1", tr.t1, "end time")->capture_default_str();
  triangularize->add_option("--dt", tr.dt, "step")->capture_default_str()->check(CLI::PositiveNumber);
  triangularize->add_option("--paths", tr.paths, "paths")->capture_default_str()->check(CLI::PositiveNumber);
  triangularize->add_option("--store-every", tr.store_every, "keep every k-th step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  PerturbArgs pe;
  auto* perturb = app.add_subcommand("perturb", "condition check or stability experiment");
  add_common(perturb, common, true, {"json", "csv"});
  perturb->add_option("--mode", pe.mode, "condition or stability")
      ->check(CLI::IsMember({"condition", "stability"}))
      ->capture_default_str();
  perturb->add_option("--perturbation", pe.perturbation, "perturbation JSON file");
  perturb->add_option("--f-coefficient", pe.f_coefficient, "clipped-power drift coefficient");
  perturb->add_option("--h-coefficient", pe.h_coefficient, "clipped-power diffusion coefficient");
  perturb->add_option("--exponent", pe.exponent, "clipped-power exponent")->capture_default_str();
  perturb->add_option("--radius", pe.radius, "clipping radius")->capture_default_str();
  perturb->add_option("--c", pe.c, "declared condition constant c")->capture_default_str();
  perturb->add_option("--q", pe.q, "declared condition exponent q")->capture_default_str();
  perturb->add_option("--scale", pe.scale, "condition check: sampling scale")->capture_default_str();
  perturb->add_option("--trials", pe.trials, "condition check: trials")->capture_default_str();
  perturb->add_option("--samples", pe.samples, "condition check: samples per ensemble")->capture_default_str();
  perturb->add_option("--delta", pe.delta, "stability: initial size")->capture_default_str();
  perturb->add_option("--horizon", pe.horizon, "stability: horizon")->capture_default_str();
  perturb->add_option("--paths", pe.paths, "stability: paths")->capture_default_str()->check(CLI::PositiveNumber);
  perturb->add_option("--dt", pe.dt, "stability: step")->capture_default_str()->check(CLI::PositiveNumber);
  perturb->add_option("--epsilon", pe.epsilon, "stability: exponent slack")->capture_default_str();
  perturb->add_option("--t0", pe.t0, "start time");

  PerronArgs pr;
  auto* perron = app.add_subcommand("perron", "instability example with log-time oscillating drift");
  add_common(perron, common, false, {"json", "csv"});
  perron->add_option("--a", pr.a, "a")->capture_default_str();
  perron->add_option("--b", pr.b, "b")->capture_default_str();
  perron->add_option("--lambda", pr.lambda, "lambda")->capture_default_str();
  perron->add_option("--delta", pr.delta, "window offset delta in (0, pi/4)")->capture_default_str();
  perron->add_option("--horizon", pr.horizon, "deterministic horizon")->capture_default_str();
  perron->add_option("--paths", pr.paths, "stochastic paths")->capture_default_str()->check(CLI::PositiveNumber);
  perron->add_option("--stochastic-horizon", pr.stochastic_horizon, "stochastic horizon")->capture_default_str();
  perron->add_option("--dt", pr.dt, "stochastic step")->capture_default_str()->check(CLI::PositiveNumber);

  auto* selftest = app.add_subcommand("selftest", "run the acceptance suite");
  add_common(selftest, common, false, {"text", "json"});

  // Subcommand-specific defaults.
  example->preparse_callback([&](std::size_t) { common.format = "text"; });
  selftest->preparse_callback([&](std::size_t) {
    common.format = "text";
    common.seed = 42;
  });
  for (auto* sub : {lyapunov, regularity, fit, triangularize, perturb, perron})
    sub->preparse_callback([&](std::size_t) { common.format = "json"; });
  moments->preparse_callback([&](std::size_t) { common.format = "csv"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    print_error("usage", e.what());
    return kExitValidation;
  }

  msd::set_thread_count(common.threads ? common.threads : default_threads());
  try {
    if (*example) return run_example(common, ex);
    if (*moments) return run_moments(common, mo);
    if (*lyapunov) return run_lyapunov(common, ly);
    if (*regularity) return run_regularity(common, re);
    if (*fit) return run_fit(common, fi);
    if (*triangularize) return run_triangularize(common, tr);
    if (*perturb) return run_perturb(common, pe);
    if (*perron) return run_perron(common, pr);
    if (*selftest) return run_selftest(common);
  } catch (const msd::NumericError& e) {
    print_error("numeric", e.what());
    return kExitNumeric;
  } catch (const msd::ValidationError& e) {
    print_error("validation", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    print_error("numeric", e.what());
    return kExitNumeric;
  }
  return 0;
}
