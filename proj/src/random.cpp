#include "msd/random.hpp"

#include <cmath>

#include "msd/error.hpp"

namespace msd {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> RngStream::block(std::uint64_t seed, std::uint64_t stream,
                                               std::uint64_t index) noexcept {
  std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(stream),
                                   static_cast<std::uint32_t>(stream >> 32),
                                   static_cast<std::uint32_t>(index),
                                   static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t k0 = static_cast<std::uint32_t>(seed);
  std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

double RngStream::uniform() {
  if (used_ >= 4) {
    buffer_ = block(seed_, stream_, next_block_++);
    used_ = 0;
  }
  const std::uint32_t a = buffer_[used_] >> 5;  // 27 bits
  const std::uint32_t b = buffer_[used_ + 1] >> 6;  // 26 bits
  used_ += 2;
  return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b) + 0.5) *
         (1.0 / 9007199254740992.0);
}

double RngStream::normal() { return normal_quantile(uniform()); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal quantile: probability outside (0, 1)");
  // Rational approximation (Acklam), then one Halley step against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

std::vector<double> BrownianPath::cumulative() const {
  std::vector<double> w(increments.size() + 1, 0.0);
  for (std::size_t k = 0; k < increments.size(); ++k) w[k + 1] = w[k] + increments[k];
  return w;
}

BrownianPath BrownianPath::coarsen(std::size_t factor) const {
  if (factor == 0 || increments.size() % factor != 0)
    throw ValidationError("coarsen: factor must divide the number of steps");
  BrownianPath out{t0, dt * static_cast<double>(factor), {}};
  out.increments.reserve(increments.size() / factor);
  for (std::size_t k = 0; k < increments.size(); k += factor) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += increments[k + j];
    out.increments.push_back(s);
  }
  return out;
}

BrownianPath brownian(double t0, double dt, std::size_t steps, RngStream stream) {
  if (!(dt > 0.0)) throw ValidationError("brownian: dt must be positive");
  if (steps == 0) throw ValidationError("brownian: at least one step required");
  BrownianPath path{t0, dt, std::vector<double>(steps)};
  const double sd = std::sqrt(dt);
  for (auto& inc : path.increments) inc = sd * stream.normal();
  return path;
}

}  // namespace msd
