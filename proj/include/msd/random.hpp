#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace msd {

/// Counter-based stream (Philox4x32-10). The key is the seed and the counter
/// holds (stream index, block index), so any stream can be generated
/// independently of all others.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_index) noexcept
      : seed_(seed), stream_(stream_index) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_index() const noexcept { return stream_; }

  /// Uniform in the open interval (0, 1), 53 bits.
  double uniform();
  /// Standard normal via the inverse CDF.
  double normal();

  /// Raw Philox output for a given counter block (exposed for testing).
  static std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream,
                                            std::uint64_t index) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t next_block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Inverse of the standard normal CDF on (0, 1).
double normal_quantile(double p);

struct BrownianPath {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> increments;

  std::size_t steps() const noexcept { return increments.size(); }
  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  /// omega(t_k) - omega(t0) for k = 0..steps.
  std::vector<double> cumulative() const;
  /// Path on the grid with spacing factor*dt built from the same increments.
  BrownianPath coarsen(std::size_t factor) const;
};

BrownianPath brownian(double t0, double dt, std::size_t steps, RngStream stream);

}  // namespace msd
