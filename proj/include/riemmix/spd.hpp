#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <functional>
#include <memory>
#include <optional>

namespace riemmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric matrix in the tangent space of the SPD manifold.
///
/// The constructor projects its argument onto the symmetric matrices, so a
/// TangentVector is symmetric by construction.
class TangentVector {
 public:
  TangentVector() = default;
  explicit TangentVector(const Matrix& m);

  static TangentVector zero(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  bool is_zero() const { return m_.isZero(0.0); }

  TangentVector& operator+=(const TangentVector& o);
  TangentVector& operator-=(const TangentVector& o);
  TangentVector& operator*=(double s);

  friend TangentVector operator+(TangentVector a, const TangentVector& b) { return a += b; }
  friend TangentVector operator-(TangentVector a, const TangentVector& b) { return a -= b; }
  friend TangentVector operator*(double s, TangentVector a) { return a *= s; }
  friend TangentVector operator*(TangentVector a, double s) { return a *= s; }
  friend TangentVector operator-(TangentVector a) { return a *= -1.0; }

 private:
  Matrix m_;
};

/// Point on the manifold of symmetric positive definite matrices.
///
/// Construction symmetrizes the input and validates it with a Cholesky
/// factorization whose squared pivots must all exceed 1e-14 times the
/// largest diagonal entry. The factor is kept for solves and log-determinants;
/// the eigendecomposition is computed on first use and shared between copies.
class SpdPoint {
 public:
  /// Throws ArgumentError if the matrix is not square or not positive definite,
  /// NumericError if it has non-finite entries.
  explicit SpdPoint(const Matrix& m);

  /// Returns nullopt instead of throwing when the matrix is not positive definite.
  static std::optional<SpdPoint> try_make(const Matrix& m);
  static SpdPoint identity(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  /// Lower-triangular Cholesky factor L with L Lᵀ = matrix().
  Matrix cholesky_factor() const { return llt_.matrixL(); }
  const Eigen::LLT<Matrix>& llt() const noexcept { return llt_; }

  double log_det() const;
  Matrix inverse() const;
  /// Σ⁻¹ B
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  /// L⁻¹ B (half-whitening with the Cholesky factor)
  Matrix whiten(const Matrix& b) const;

  const Vector& eigenvalues() const;
  const Matrix& eigenvectors() const;
  /// Σ^p for real p through the eigendecomposition.
  Matrix power(double p) const;
  Matrix sqrt() const { return power(0.5); }
  Matrix inv_sqrt() const { return power(-0.5); }

 private:
  struct Spectral;
  SpdPoint(Matrix m, Eigen::LLT<Matrix> llt);
  const Spectral& spectral() const;

  Matrix m_;
  Eigen::LLT<Matrix> llt_;
  std::shared_ptr<Spectral> spectral_;
};

/// Applies a scalar function to the eigenvalues of a symmetric matrix.
Matrix sym_apply(const Matrix& sym, const std::function<double(double)>& f);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

/// trace(Σ⁻¹ ξ Σ⁻¹ η)
double metric(const SpdPoint& base, const TangentVector& xi, const TangentVector& eta);
double norm(const SpdPoint& base, const TangentVector& xi);

/// ½ Σ (G + Gᵀ) Σ
TangentVector egrad_to_rgrad(const SpdPoint& base, const Matrix& egrad);

/// Σ^{1/2} exp(Σ^{-1/2} ξ Σ^{-1/2}) Σ^{1/2}; returns base unchanged for ξ = 0.
SpdPoint exp_map(const SpdPoint& base, const TangentVector& xi);
TangentVector log_map(const SpdPoint& base, const SpdPoint& target);

/// a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2} for t in [0, 1].
SpdPoint geodesic(const SpdPoint& a, const SpdPoint& b, double t);

/// Parallel transport along the connecting geodesic, ξ ↦ E ξ Eᵀ with
/// E = (Σ₂Σ₁⁻¹)^{1/2}. E is formed as Σ₁^{1/2} N^{1/2} Σ₁^{-1/2} with
/// N = Σ₁^{-1/2} Σ₂ Σ₁^{-1/2}, which satisfies E Σ₁ Eᵀ = Σ₂.
class TransportOperator {
 public:
  TransportOperator(const SpdPoint& from, const SpdPoint& to);
  TangentVector operator()(const TangentVector& xi) const;
  const Matrix& factor() const noexcept { return e_; }
  bool is_identity() const noexcept { return identity_; }

 private:
  Matrix e_;
  bool identity_ = false;
};

TangentVector parallel_transport(const SpdPoint& from, const SpdPoint& to, const TangentVector& xi);

/// Σ + ξ. Throws RetractionFailure carrying the minimum eigenvalue of Σ + ξ
/// when the sum is not positive definite.
SpdPoint euclidean_retraction(const SpdPoint& base, const TangentVector& xi);

}  // namespace riemmix
