#include "riemmix/spd.hpp"

#include "riemmix/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

namespace riemmix {

namespace {

constexpr double kPivotFloor = 1e-14;
// exp() of anything above this overflows a double once multiplied back.
constexpr double kExpLimit = 700.0;

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ArgumentError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
  }
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Cholesky with the scale-invariant pivot guard; nullopt if the matrix is not SPD.
std::optional<Eigen::LLT<Matrix>> guarded_llt(const Matrix& sym) {
  if (sym.rows() == 0) return Eigen::LLT<Matrix>(sym);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const double max_diag = sym.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) return std::nullopt;
  const Vector pivots = Matrix(llt.matrixL()).diagonal();
  if ((pivots.array().square() < kPivotFloor * max_diag).any()) return std::nullopt;
  return llt;
}

}  // namespace

// ---------------------------------------------------------------- TangentVector

TangentVector::TangentVector(const Matrix& m) {
  if (m.rows() != m.cols()) throw ArgumentError("TangentVector: matrix is not square");
  require_finite(m, "TangentVector");
  m_ = symmetrized(m);
}

TangentVector TangentVector::zero(Eigen::Index dim) { return TangentVector(Matrix::Zero(dim, dim)); }

TangentVector& TangentVector::operator+=(const TangentVector& o) {
  require_same_dim(dim(), o.dim(), "TangentVector +");
  m_ += o.m_;
  return *this;
}

TangentVector& TangentVector::operator-=(const TangentVector& o) {
  require_same_dim(dim(), o.dim(), "TangentVector -");
  m_ -= o.m_;
  return *this;
}

TangentVector& TangentVector::operator*=(double s) {
  m_ *= s;
  return *this;
}

// ---------------------------------------------------------------- SpdPoint

struct SpdPoint::Spectral {
  std::once_flag once;
  Vector values;
  Matrix vectors;
};

SpdPoint::SpdPoint(Matrix m, Eigen::LLT<Matrix> llt)
    : m_(std::move(m)), llt_(std::move(llt)), spectral_(std::make_shared<Spectral>()) {}

SpdPoint::SpdPoint(const Matrix& m) : spectral_(std::make_shared<Spectral>()) {
  if (m.rows() != m.cols()) throw ArgumentError("SpdPoint: matrix is not square");
  require_finite(m, "SpdPoint");
  m_ = symmetrized(m);
  auto llt = guarded_llt(m_);
  if (!llt) throw ArgumentError("SpdPoint: matrix is not positive definite");
  llt_ = std::move(*llt);
}

std::optional<SpdPoint> SpdPoint::try_make(const Matrix& m) {
  if (m.rows() != m.cols()) throw ArgumentError("SpdPoint: matrix is not square");
  require_finite(m, "SpdPoint");
  Matrix sym = symmetrized(m);
  auto llt = guarded_llt(sym);
  if (!llt) return std::nullopt;
  return SpdPoint(std::move(sym), std::move(*llt));
}

SpdPoint SpdPoint::identity(Eigen::Index dim) { return SpdPoint(Matrix::Identity(dim, dim)); }

double SpdPoint::log_det() const {
  return 2.0 * Matrix(llt_.matrixL()).diagonal().array().log().sum();
}

Matrix SpdPoint::inverse() const {
  Matrix inv = llt_.solve(Matrix::Identity(dim(), dim()));
  return symmetrized(inv);
}

Matrix SpdPoint::whiten(const Matrix& b) const { return llt_.matrixL().solve(b); }

const SpdPoint::Spectral& SpdPoint::spectral() const {
  std::call_once(spectral_->once, [this] {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_);
    spectral_->values = es.eigenvalues();
    spectral_->vectors = es.eigenvectors();
  });
  return *spectral_;
}

const Vector& SpdPoint::eigenvalues() const { return spectral().values; }
const Matrix& SpdPoint::eigenvectors() const { return spectral().vectors; }

Matrix SpdPoint::power(double p) const {
  const auto& s = spectral();
  // Rounding can leave a tiny eigenvalue below zero for nearly singular input.
  const Vector lp = s.values.unaryExpr([p](double l) { return std::pow(std::max(l, 0.0), p); });
  Matrix r = s.vectors * lp.asDiagonal() * s.vectors.transpose();
  return symmetrized(r);
}

// ---------------------------------------------------------------- free functions

Matrix sym_apply(const Matrix& sym, const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector fl = es.eigenvalues().unaryExpr(f);
  Matrix r = es.eigenvectors() * fl.asDiagonal() * es.eigenvectors().transpose();
  return symmetrized(r);
}

double min_eigenvalue(const Matrix& sym) {
  if (sym.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double metric(const SpdPoint& base, const TangentVector& xi, const TangentVector& eta) {
  require_same_dim(base.dim(), xi.dim(), "metric");
  require_same_dim(base.dim(), eta.dim(), "metric");
  // With Σ = L Lᵀ, trace(Σ⁻¹ξΣ⁻¹η) = <L⁻¹ξL⁻ᵀ, L⁻¹ηL⁻ᵀ>_F.
  const Matrix a = base.whiten(base.whiten(xi.matrix()).transpose());
  const Matrix b = base.whiten(base.whiten(eta.matrix()).transpose());
  const double v = a.cwiseProduct(b).sum();
  if (!std::isfinite(v)) throw NumericError("metric: non-finite result");
  return v;
}

double norm(const SpdPoint& base, const TangentVector& xi) {
  return std::sqrt(std::max(0.0, metric(base, xi, xi)));
}

TangentVector egrad_to_rgrad(const SpdPoint& base, const Matrix& egrad) {
  if (egrad.rows() != egrad.cols()) throw ArgumentError("egrad_to_rgrad: gradient is not square");
  require_same_dim(base.dim(), egrad.rows(), "egrad_to_rgrad");
  const Matrix& s = base.matrix();
  return TangentVector(0.5 * s * (egrad + egrad.transpose()) * s);
}

SpdPoint exp_map(const SpdPoint& base, const TangentVector& xi) {
  require_same_dim(base.dim(), xi.dim(), "exp_map");
  if (xi.is_zero()) return base;
  const Matrix half = base.sqrt();
  const Matrix inv_half = base.inv_sqrt();
  const Matrix inner = symmetrized(inv_half * xi.matrix() * inv_half);
  Eigen::SelfAdjointEigenSolver<Matrix> es(inner);
  if (es.eigenvalues().maxCoeff() > kExpLimit) throw NumericError("exp_map: matrix exponential overflow");
  const Vector el = es.eigenvalues().array().exp();
  const Matrix ex = es.eigenvectors() * el.asDiagonal() * es.eigenvectors().transpose();
  auto out = SpdPoint::try_make(half * ex * half);
  if (!out) throw NumericError("exp_map: result lost positive definiteness in floating point");
  return *out;
}

TangentVector log_map(const SpdPoint& base, const SpdPoint& target) {
  require_same_dim(base.dim(), target.dim(), "log_map");
  const Matrix half = base.sqrt();
  const Matrix inv_half = base.inv_sqrt();
  const Matrix inner = inv_half * target.matrix() * inv_half;
  const Matrix lg = sym_apply(symmetrized(inner), [](double l) { return std::log(l); });
  return TangentVector(half * lg * half);
}

SpdPoint geodesic(const SpdPoint& a, const SpdPoint& b, double t) {
  require_same_dim(a.dim(), b.dim(), "geodesic");
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("geodesic: t must lie in [0, 1]");
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const Matrix half = a.sqrt();
  const Matrix inv_half = a.inv_sqrt();
  const Matrix inner = symmetrized(inv_half * b.matrix() * inv_half);
  const Matrix pw = sym_apply(inner, [t](double l) { return std::pow(l, t); });
  return SpdPoint(half * pw * half);
}

TransportOperator::TransportOperator(const SpdPoint& from, const SpdPoint& to) {
  require_same_dim(from.dim(), to.dim(), "parallel_transport");
  if (from.matrix() == to.matrix()) {
    identity_ = true;
    e_ = Matrix::Identity(from.dim(), from.dim());
    return;
  }
  const Matrix half = from.sqrt();
  const Matrix inv_half = from.inv_sqrt();
  const Matrix inner = symmetrized(inv_half * to.matrix() * inv_half);
  const Matrix root = sym_apply(inner, [](double l) { return std::sqrt(std::max(l, 0.0)); });
  e_ = half * root * inv_half;
}

TangentVector TransportOperator::operator()(const TangentVector& xi) const {
  require_same_dim(e_.rows(), xi.dim(), "parallel_transport");
  if (identity_) return xi;
  return TangentVector(e_ * xi.matrix() * e_.transpose());
}

TangentVector parallel_transport(const SpdPoint& from, const SpdPoint& to, const TangentVector& xi) {
  return TransportOperator(from, to)(xi);
}

SpdPoint euclidean_retraction(const SpdPoint& base, const TangentVector& xi) {
  require_same_dim(base.dim(), xi.dim(), "euclidean_retraction");
  if (xi.is_zero()) return base;
  const Matrix sum = base.matrix() + xi.matrix();
  if (!sum.allFinite()) throw NumericError("euclidean_retraction: non-finite result");
  auto out = SpdPoint::try_make(sum);
  if (!out) throw RetractionFailure(min_eigenvalue(symmetrized(sum)));
  return *out;
}

}  // namespace riemmix
