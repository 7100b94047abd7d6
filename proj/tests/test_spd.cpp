#include "doctest.h"
#include "support.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/spd.hpp"

#include <cmath>
#include <limits>

using namespace riemmix;
using namespace testing;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST_CASE("SpdPoint construction symmetrizes and validates") {
  Matrix a(2, 2);
  a << 2.0, 1.0, 0.0, 2.0;
  const SpdPoint p(a);
  CHECK(p.matrix()(0, 1) == doctest::Approx(0.5));
  CHECK(p.matrix()(1, 0) == doctest::Approx(0.5));

  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(SpdPoint{indefinite}, ArgumentError);
  CHECK_FALSE(SpdPoint::try_make(indefinite).has_value());
  CHECK_THROWS_AS(SpdPoint(Matrix::Zero(2, 3)), ArgumentError);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(SpdPoint{bad}, NumericError);
  Matrix tiny = Matrix::Identity(2, 2);
  tiny(1, 1) = 1e-16;
  CHECK_THROWS_AS(SpdPoint{tiny}, ArgumentError);
}

TEST_CASE("metric examples") {
  const SpdPoint I2 = SpdPoint::identity(2);
  const TangentVector e(Matrix::Identity(2, 2));
  CHECK(metric(I2, e, e) == doctest::Approx(2.0));

  std::mt19937_64 rng(1);
  const TangentVector xi = random_tangent(3, rng);
  const TangentVector eta = random_tangent(3, rng);
  CHECK(metric(SpdPoint::identity(3), xi, eta) == doctest::Approx((xi.matrix().array() * eta.matrix().array()).sum()));

  CHECK(metric(SpdPoint(m1(4.0)), TangentVector(m1(2.0)), TangentVector(m1(6.0))) == doctest::Approx(0.75));
  CHECK_THROWS_AS(metric(I2, TangentVector(Matrix::Identity(3, 3)), e), ArgumentError);
  CHECK_THROWS_AS(TangentVector(m1(std::numeric_limits<double>::infinity())), NumericError);
}

TEST_CASE("metric is symmetric and positive definite") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const SpdPoint s = random_spd(4, rng);
    const TangentVector xi = random_tangent(4, rng);
    const TangentVector eta = random_tangent(4, rng);
    CHECK(rel_diff(metric(s, xi, eta), metric(s, eta, xi)) < 1e-12);
    CHECK(metric(s, xi, xi) > 0.0);
  }
}

TEST_CASE("egrad_to_rgrad examples") {
  std::mt19937_64 rng(3);
  const Matrix g = random_symmetric(3, rng);
  CHECK(rel_diff(egrad_to_rgrad(SpdPoint::identity(3), g).matrix(), g) < 1e-15);
  const Matrix a = random_matrix(3, 3, rng);
  CHECK(rel_diff(egrad_to_rgrad(SpdPoint::identity(3), a).matrix(), 0.5 * (a + a.transpose())) < 1e-15);
  CHECK(egrad_to_rgrad(SpdPoint(m1(3.0)), m1(2.0)).matrix()(0, 0) == doctest::Approx(18.0));
  CHECK_THROWS_AS(egrad_to_rgrad(SpdPoint::identity(2), Matrix::Identity(3, 3)), ArgumentError);
}

TEST_CASE("exp_map examples") {
  CHECK(exp_map(SpdPoint::identity(2), TangentVector::zero(2)).matrix() == Matrix::Identity(2, 2));
  CHECK(exp_map(SpdPoint(m1(2.0)), TangentVector(m1(2.0))).matrix()(0, 0) == doctest::Approx(2.0 * std::exp(1.0)));

  // Oracle: the geodesic with initial velocity ξ is Σ^{½} exp(t Σ^{-½} ξ Σ^{-½}) Σ^{½}; integrate its ODE
  // Σ'' = Σ' Σ⁻¹ Σ' with RK4 and compare at t = 1.
  std::mt19937_64 rng(4);
  const SpdPoint s = random_spd(3, rng);
  const TangentVector xi = random_tangent(3, rng, 0.5);
  Matrix p = s.matrix();
  Matrix v = xi.matrix();
  const int steps = 2000;
  const double h = 1.0 / steps;
  auto acc = [](const Matrix& P, const Matrix& V) { return Matrix(V * P.inverse() * V); };
  for (int k = 0; k < steps; ++k) {
    const Matrix k1p = v, k1v = acc(p, v);
    const Matrix k2p = v + 0.5 * h * k1v, k2v = acc(p + 0.5 * h * k1p, v + 0.5 * h * k1v);
    const Matrix k3p = v + 0.5 * h * k2v, k3v = acc(p + 0.5 * h * k2p, v + 0.5 * h * k2v);
    const Matrix k4p = v + h * k3v, k4v = acc(p + h * k3p, v + h * k3v);
    p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  CHECK(rel_diff(exp_map(s, xi).matrix(), p) < 1e-9);
}

TEST_CASE("exp_map overflow is a numeric error") {
  CHECK_THROWS_AS(exp_map(SpdPoint(m1(1.0)), TangentVector(m1(1e4))), NumericError);
}

TEST_CASE("exp_map stays symmetric positive definite") {
  std::mt19937_64 rng(5);
  for (Eigen::Index d : {1, 2, 5, 20}) {
    for (int t = 0; t < 25; ++t) {
      const SpdPoint s = random_spd(d, rng);
      TangentVector xi = random_tangent(d, rng);
      xi *= 10.0 / norm(s, xi) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const SpdPoint e = exp_map(s, xi);
      CHECK((e.matrix() - e.matrix().transpose()).norm() <= 1e-12 * e.matrix().norm());
      CHECK(e.eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("log_map examples") {
  std::mt19937_64 rng(6);
  const SpdPoint s = random_spd(3, rng);
  CHECK(log_map(s, s).matrix().norm() < 1e-12);
  CHECK(log_map(SpdPoint(m1(1.0)), SpdPoint(m1(std::exp(2.0)))).matrix()(0, 0) == doctest::Approx(2.0));
  for (int t = 0; t < 20; ++t) {
    const SpdPoint a = random_spd(4, rng);
    const SpdPoint b = random_spd(4, rng);
    CHECK(rel_diff(exp_map(a, log_map(a, b)).matrix(), b.matrix()) < 1e-8);
  }
}

TEST_CASE("geodesic examples and symmetry") {
  std::mt19937_64 rng(7);
  const SpdPoint a = random_spd(3, rng);
  const SpdPoint b = random_spd(3, rng);
  CHECK(rel_diff(geodesic(a, a, 0.3).matrix(), a.matrix()) < 1e-12);
  CHECK(geodesic(a, b, 0.0).matrix() == a.matrix());
  CHECK(geodesic(a, b, 1.0).matrix() == b.matrix());
  CHECK(geodesic(SpdPoint(m1(1.0)), SpdPoint(m1(4.0)), 0.5).matrix()(0, 0) == doctest::Approx(2.0));
  for (double t : {0.1, 0.5, 0.77}) {
    CHECK(rel_diff(geodesic(a, b, t).matrix(), geodesic(b, a, 1.0 - t).matrix()) < 1e-10);
  }
  CHECK_THROWS_AS(geodesic(a, b, 1.5), ArgumentError);
  CHECK_THROWS_AS(geodesic(a, b, -0.1), ArgumentError);
}

TEST_CASE("parallel transport examples") {
  std::mt19937_64 rng(8);
  const SpdPoint a = random_spd(3, rng);
  const TangentVector xi = random_tangent(3, rng);
  CHECK(rel_diff(parallel_transport(a, a, xi).matrix(), xi.matrix()) < 1e-12);
  CHECK(parallel_transport(SpdPoint(m1(1.0)), SpdPoint(m1(4.0)), TangentVector(m1(3.0))).matrix()(0, 0) ==
        doctest::Approx(12.0));
}

TEST_CASE("parallel transport is isometric and linear and maps the base correctly") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    const SpdPoint a = random_spd(3, rng);
    const SpdPoint b = random_spd(3, rng);
    const TangentVector xi = random_tangent(3, rng);
    const TangentVector eta = random_tangent(3, rng);
    const TransportOperator T(a, b);
    CHECK(rel_diff(metric(b, T(xi), T(eta)), metric(a, xi, eta)) < 1e-10);
    const TangentVector lin = T(2.5 * xi + (-0.7) * eta);
    const Matrix expect = 2.5 * T(xi).matrix() - 0.7 * T(eta).matrix();
    CHECK((lin.matrix() - expect).norm() <= 1e-12 * std::max(1.0, expect.norm()));
    // Transporting the base point itself (as a symmetric matrix) gives the target.
    CHECK(rel_diff(T(TangentVector(a.matrix())).matrix(), b.matrix()) < 1e-10);
  }
}

TEST_CASE("euclidean retraction examples") {
  const SpdPoint I2 = SpdPoint::identity(2);
  CHECK(euclidean_retraction(I2, TangentVector::zero(2)).matrix() == I2.matrix());
  Matrix step = Matrix::Zero(2, 2);
  step.diagonal() << 1.0, -0.5;
  const SpdPoint r = euclidean_retraction(I2, TangentVector(step));
  CHECK(r.matrix()(0, 0) == doctest::Approx(2.0));
  CHECK(r.matrix()(1, 1) == doctest::Approx(0.5));
  try {
    euclidean_retraction(SpdPoint::identity(1), TangentVector(m1(-2.0)));
    FAIL("expected a retraction failure");
  } catch (const RetractionFailure& e) {
    CHECK(e.min_eigenvalue() == doctest::Approx(-1.0));
  }
}

TEST_CASE("retraction axioms hold for both retractions") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    const SpdPoint s = random_spd(3, rng);
    const TangentVector xi = random_tangent(3, rng);
    CHECK(exp_map(s, TangentVector::zero(3)).matrix() == s.matrix());
    CHECK(euclidean_retraction(s, TangentVector::zero(3)).matrix() == s.matrix());
    double prev = std::numeric_limits<double>::infinity();
    for (double h : {1e-3, 1e-4, 1e-5}) {
      const double err = ((exp_map(s, h * xi).matrix() - s.matrix()) / h - xi.matrix()).norm();
      CHECK(err < prev);
      CHECK(err < 50.0 * h * std::max(1.0, xi.matrix().squaredNorm()));
      prev = err;
      const double eerr = ((euclidean_retraction(s, h * xi).matrix() - s.matrix()) / h - xi.matrix()).norm();
      CHECK(eerr < 1e-8);
    }
  }
}
