#pragma once

// Deterministic parallelism: work items write to their own indexed slots and
// reductions run over those slots in a fixed order, so results never depend on
// the worker count.

#include <cstddef>
#include <functional>
#include <span>

namespace msd {

/// Worker cap used by parallel_for; 0 or unset means 1.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Calls body(i) for i in [0, n) using static contiguous chunks. The first
/// exception thrown (lowest chunk index) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Pairwise summation with a split point that depends only on the length.
double pairwise_sum(std::span<const double> values);

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error (sample std / sqrt(M)); stderr is 0 for M=1.
MeanStderr mean_stderr(std::span<const double> values);

}  // namespace msd
