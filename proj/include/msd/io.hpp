#pragma once

// CSV and JSON serialization of moment curves and surfaces.

#include <string>

#include "json.hpp"
#include "msd/dichotomy.hpp"
#include "msd/engines.hpp"

namespace msd {

/// Header `t,value,stderr`, one row per point.
std::string curve_to_csv(const MomentCurve& curve);
/// Header `t,s,value,stderr`.
std::string surface_to_csv(const MomentSurface& surface);

nlohmann::json curve_to_json(const MomentCurve& curve);
nlohmann::json surface_to_json(const MomentSurface& surface);

/// Shortest decimal text that reads back to the same double ("inf", "-inf", "nan" otherwise).
std::string format_number(double x);

}  // namespace msd
