#include "msd/linalg.hpp"

#include <cmath>
#include <string>

#include "msd/error.hpp"

namespace msd {

Projector::Projector(std::size_t n, std::size_t k) : n_(n), k_(k) {
  if (n == 0) throw ValidationError("projector dimension must be positive");
  if (k > n)
    throw ValidationError("projector rank " + std::to_string(k) + " out of range [0, " +
                          std::to_string(n) + "]");
}

Matrix Projector::matrix() const {
  Matrix P = Matrix::Zero(n_, n_);
  for (std::size_t i = 0; i < k_; ++i) P(i, i) = 1.0;
  return P;
}

Matrix Projector::complement() const { return Matrix::Identity(n_, n_) - matrix(); }

Projector make_projector(std::size_t n, std::size_t k) { return Projector(n, k); }

QrResult gram_schmidt_qr(const Matrix& M) {
  if (M.rows() != M.cols() || M.rows() == 0) throw ValidationError("QR: matrix must be square");
  const Eigen::Index n = M.rows();
  const double scale = M.norm();
  if (!std::isfinite(scale)) throw NumericError("QR: non-finite entries");
  QrResult out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector v = M.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double r = out.Q.col(i).dot(v);
        out.R(i, j) += r;
        v -= r * out.Q.col(i);
      }
    }
    const double norm = v.norm();
    if (!(norm > 1e-12 * scale))
      throw NumericError("QR: rank deficiency at column " + std::to_string(j));
    out.R(j, j) = norm;
    out.Q.col(j) = v / norm;
  }
  return out;
}

namespace {

Matrix block_sqrt(const Matrix& block, const char* which) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(block);
  if (eig.info() != Eigen::Success) throw NumericError("square root: eigendecomposition failed");
  const Vector& w = eig.eigenvalues();
  const double floor = 1e-14 * std::max(1.0, w.cwiseAbs().maxCoeff());
  if (w.minCoeff() <= floor)
    throw NumericError(std::string("square root: ") + which +
                       " block is not positive definite (smallest eigenvalue " +
                       std::to_string(w.minCoeff()) + ")");
  return eig.eigenvectors() * w.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Matrix spd_sqrt_commuting(const Matrix& gram, const Projector& P) {
  const auto n = static_cast<Eigen::Index>(P.dim());
  if (gram.rows() != n || gram.cols() != n)
    throw ValidationError("square root: gram/projector dimension mismatch");
  const double scale = std::max(1.0, gram.norm());
  if ((gram - gram.transpose()).norm() > 1e-12 * scale)
    throw ValidationError("square root: gram matrix is not symmetric");
  const auto k = static_cast<Eigen::Index>(P.rank());
  Matrix R = Matrix::Zero(n, n);
  if (k > 0) R.topLeftCorner(k, k) = block_sqrt(gram.topLeftCorner(k, k), "range");
  if (k < n) R.bottomRightCorner(n - k, n - k) = block_sqrt(gram.bottomRightCorner(n - k, n - k), "kernel");
  return R;
}

double operator_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

}  // namespace msd
