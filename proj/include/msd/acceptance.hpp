#pragma once

// The acceptance suite: fifteen end-to-end checks with pinned tolerances,
// shared by the acceptance test binary and `msd selftest`.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace msd {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;  // measured values and tolerances; never timings
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 42;
  /// Criterion ids to run (empty means all).
  std::vector<int> only;
  /// Called after each criterion finishes.
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options = {});

/// "criterion  N  PASS  title: detail"
std::string format_result(const CriterionResult& r);

/// Serialized Monte Carlo results that must not depend on the worker count.
std::string determinism_fingerprint(std::uint64_t seed);

}  // namespace msd
