#include "msd/io.hpp"

#include <charconv>
#include <cmath>

namespace msd {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string curve_to_csv(const MomentCurve& curve) {
  std::string out = "t,value,stderr\n";
  for (const auto& p : curve)
    out += format_number(p.t) + ',' + format_number(p.value) + ',' + format_number(p.std_error) + '\n';
  return out;
}

std::string surface_to_csv(const MomentSurface& surface) {
  std::string out = "t,s,value,stderr\n";
  for (const auto& p : surface.points) {
    out += format_number(p.t) + ',' + format_number(p.s) + ',' + format_number(p.value) + ',' +
           format_number(p.std_error) + '\n';
  }
  return out;
}

namespace {

// JSON has no infinities; overflowed moments are reported through log_value.
nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json curve_to_json(const MomentCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve) {
    pts.push_back({{"t", p.t},
                   {"value", finite_or_null(p.value)},
                   {"log_value", finite_or_null(p.log_value)},
                   {"stderr", finite_or_null(p.std_error)},
                   {"exact", p.exact}});
  }
  return pts;
}

nlohmann::json surface_to_json(const MomentSurface& surface) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : surface.points) {
    pts.push_back({{"t", p.t},
                   {"s", p.s},
                   {"value", finite_or_null(p.value)},
                   {"log_value", finite_or_null(p.log_moment())},
                   {"stderr", finite_or_null(p.std_error)},
                   {"exact", p.exact}});
  }
  return {{"method", surface.method}, {"points", pts}};
}

}  // namespace msd
