#pragma once

// Dense small-matrix helpers on top of Eigen.

#include <Eigen/Dense>
#include <cstddef>

namespace msd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Orthogonal projector in canonical block form diag(Id_k, 0).
class Projector {
 public:
  Projector(std::size_t n, std::size_t k);

  std::size_t dim() const noexcept { return n_; }
  std::size_t rank() const noexcept { return k_; }
  Matrix matrix() const;
  Matrix complement() const;
  /// True when this projector is 0 or Id.
  bool trivial() const noexcept { return k_ == 0 || k_ == n_; }

 private:
  std::size_t n_;
  std::size_t k_;
};

Projector make_projector(std::size_t n, std::size_t k);

struct QrResult {
  Matrix Q;
  Matrix R;
};

/// Modified Gram-Schmidt with one reorthogonalization pass. R has a positive
/// diagonal. Throws NumericError naming the first column that is (numerically)
/// in the span of the previous ones.
QrResult gram_schmidt_qr(const Matrix& M);

/// Square root R of P*gram*P + Q*gram*Q that commutes with P, computed from
/// the symmetric eigendecomposition of each diagonal block.
Matrix spd_sqrt_commuting(const Matrix& gram, const Projector& P);

/// Largest singular value.
double operator_norm(const Matrix& M);

}  // namespace msd
