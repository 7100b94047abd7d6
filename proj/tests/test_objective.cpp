#include "doctest.h"
#include "support.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/objective.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <numbers>

using namespace riemmix;
using namespace testing;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Densities formed directly from the determinant and inverse, summed without log-sum-exp.
double brute_loglik(const GmmParams& p, const AugmentedData& data) {
  const Vector alpha = weights_from_logits(p.logits);
  const double D = static_cast<double>(data.d + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Vector y = data.rows.row(i).transpose();
    double mix = 0.0;
    for (std::size_t j = 0; j < p.num_components(); ++j) {
      const Matrix& S = p.components[j].matrix();
      const double q = 2.0 * std::numbers::pi * std::exp(0.5) * std::pow(2.0 * std::numbers::pi, -0.5 * D) /
                       std::sqrt(S.determinant()) * std::exp(-0.5 * y.dot(S.inverse() * y));
      mix += alpha(static_cast<Eigen::Index>(j)) * q;
    }
    total += std::log(mix);
  }
  return total;
}

GmmParams permuted(const GmmParams& p, const std::vector<std::size_t>& perm) {
  const Vector w = weights_from_logits(p.logits);
  GmmParams q;
  Vector pw(w.size());
  for (std::size_t t = 0; t < perm.size(); ++t) {
    q.components.push_back(p.components[perm[t]]);
    pw(static_cast<Eigen::Index>(t)) = w(static_cast<Eigen::Index>(perm[t]));
  }
  q.logits = logits_from_weights(pw);
  return q;
}

PenaltyConfig random_penalty(const Matrix& x) { return penalty_from_data(x); }

}  // namespace

TEST_CASE("augment examples") {
  const AugmentedData a = augment(Matrix::Zero(1, 2));
  CHECK(a.rows.rows() == 1);
  CHECK(a.rows(0, 2) == 1.0);
  CHECK(a.rows(0, 0) == 0.0);
  const AugmentedData b = augment(Matrix::Constant(1, 1, 1.5));
  CHECK(b.rows(0, 0) == 1.5);
  CHECK(b.rows(0, 1) == 1.0);
  const AugmentedData e = augment(Matrix::Zero(0, 4));
  CHECK(e.empty());
  CHECK(e.d == 4);
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(augment(bad), NumericError);
}

TEST_CASE("log_q_density examples") {
  Vector y(2);
  y << 0.0, 1.0;
  CHECK(log_q_density(y, SpdPoint::identity(2)) == doctest::Approx(0.0));
  Matrix S = Matrix::Zero(2, 2);
  S.diagonal() << 4.0, 1.0;
  CHECK(log_q_density(y, SpdPoint(S)) == doctest::Approx(-std::log(2.0)));
  for (int d : {1, 2, 5, 10}) {
    Vector yd = Vector::Zero(d + 1);
    yd(d) = 1.0;
    const double expect = 0.5 + kLog2Pi - 0.5 * (d + 1) * kLog2Pi - 0.5;
    CHECK(log_q_density(yd, SpdPoint::identity(d + 1)) == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK_THROWS_AS(log_q_density(Vector::Zero(3), SpdPoint::identity(2)), ArgumentError);
}

TEST_CASE("reformulated loglik examples") {
  GmmParams p;
  p.components = {SpdPoint::identity(2)};
  p.logits = Vector(0);
  CHECK(reformulated_loglik(p, augment(Matrix::Zero(1, 1))) == doctest::Approx(0.0));
  CHECK(reformulated_loglik(p, augment(Matrix::Zero(0, 1))) == 0.0);

  std::mt19937_64 rng(31);
  const Matrix x = random_matrix(40, 2, rng);
  const AugmentedData data = augment(x);
  GmmParams one;
  one.components = {random_spd(3, rng)};
  one.logits = Vector(0);
  GmmParams twin;
  twin.components = {one.components[0], one.components[0]};
  twin.logits = Vector::Constant(1, 0.8);
  CHECK(rel_diff(reformulated_loglik(twin, data), reformulated_loglik(one, data)) < 1e-13);
}

TEST_CASE("reformulated loglik matches direct summation") {
  std::mt19937_64 rng(32);
  const Matrix x = clustered_data(50, 2, 3, 2.0, rng);
  const AugmentedData data = augment(x);
  const GmmParams p = random_params(3, 2, rng);
  CHECK(rel_diff(reformulated_loglik(p, data), brute_loglik(p, data)) < 1e-12);
}

TEST_CASE("build_psi_matrix examples") {
  const PenaltyConfig c = build_psi_matrix(3.0, 0.0, 1.0, Matrix::Identity(1, 1), Vector::Constant(1, 2.0));
  CHECK(c.alpha_w == doctest::Approx(1.0));
  CHECK(c.rho == doctest::Approx(3.0));
  Matrix expect(2, 2);
  expect << 13.0, 6.0, 6.0, 3.0;
  CHECK(rel_diff(c.Psi, expect) < 1e-15);

  // Zero prior mean: block diagonal with (α/β)Λ on top.
  std::mt19937_64 rng(33);
  const Matrix L = random_spd(3, rng).matrix();
  const PenaltyConfig z = build_psi_matrix(2.0, 4.0, 1.5, L, Vector::Zero(3));
  CHECK(rel_diff(z.Psi.topLeftCorner(3, 3), Matrix(z.alpha_w / z.beta * L)) < 1e-15);
  CHECK(z.Psi.topRightCorner(3, 1).norm() == 0.0);
  CHECK(z.Psi(3, 3) == 2.0);

  std::uniform_real_distribution<double> u(1.0, 5.0);
  for (int t = 0; t < 100; ++t) {
    const PenaltyConfig r =
        build_psi_matrix(u(rng), u(rng), u(rng), random_spd(3, rng).matrix(), random_matrix(3, 1, rng));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r.Psi).eigenvalues().minCoeff() >= -1e-12 * r.Psi.norm());
    CHECK(rel_diff(r.rho, r.alpha_w * (3.0 + r.nu + 1.0) + r.beta) < 1e-14);
  }

  CHECK_THROWS_AS(build_psi_matrix(2.0, 0.0, 1.0, -Matrix::Identity(1, 1), Vector::Zero(1)), ArgumentError);
  CHECK_THROWS_AS(build_psi_matrix(0.5, 0.0, 1.0, Matrix::Identity(1, 1), Vector::Ones(1)), ArgumentError);
}

TEST_CASE("penalty_psi examples") {
  for (int d : {1, 3}) {
    PenaltyConfig c = PenaltyConfig::none(d);
    c.rho = 2.0;
    c.beta = 2.0;
    c.Psi = Matrix::Identity(d + 1, d + 1);
    CHECK(penalty_psi(SpdPoint::identity(d + 1), c) == doctest::Approx(-(d + 1.0)));
  }
  std::mt19937_64 rng(34);
  CHECK(penalty_psi(random_spd(3, rng), PenaltyConfig::none(2)) == 0.0);

  PenaltyConfig s = PenaltyConfig::none(0);
  s.rho = 1.7;
  s.beta = 0.6;
  s.Psi = Matrix::Constant(1, 1, 2.5);
  const double e2 = std::exp(2.0);
  CHECK(penalty_psi(SpdPoint(Matrix::Constant(1, 1, e2)), s) ==
        doctest::Approx(-0.5 * 1.7 * 2.0 - 0.5 * 0.6 * 2.5 / e2).epsilon(1e-14));
}

TEST_CASE("penalty_phi examples") {
  for (std::size_t K : {1u, 2u, 5u}) {
    CHECK(penalty_phi(Vector::Zero(static_cast<Eigen::Index>(K) - 1), 1.5, K) ==
          doctest::Approx(-static_cast<double>(K) * 1.5 * std::log(static_cast<double>(K))));
  }
  CHECK(penalty_phi(Vector::Constant(3, 0.4), 0.0, 4) == 0.0);
  CHECK(penalty_phi(Vector::Constant(1, std::log(3.0)), 1.0, 2) == doctest::Approx(std::log(3.0) - 2.0 * std::log(4.0)));
  CHECK_THROWS_AS(penalty_phi(Vector::Zero(2), 1.0, 2), ArgumentError);
}

TEST_CASE("penalized objective is the sum of its parts") {
  std::mt19937_64 rng(35);
  const Matrix x = clustered_data(60, 3, 3, 3.0, rng);
  const AugmentedData data = augment(x);
  const GmmParams p = random_params(3, 3, rng);
  const PenaltyConfig cfg = random_penalty(x);
  double parts = reformulated_loglik(p, data) + penalty_phi(p.logits, cfg.zeta, 3);
  for (const auto& S : p.components) parts += penalty_psi(S, cfg);
  CHECK(rel_diff(penalized_objective(p, data, cfg), parts) < 1e-13);
  CHECK(penalized_objective(p, data, PenaltyConfig::none(3)) == doctest::Approx(reformulated_loglik(p, data)));

  GmmParams one;
  one.components = {p.components[0]};
  one.logits = Vector(0);
  CHECK(rel_diff(penalized_objective(one, data, cfg), reformulated_loglik(one, data) + penalty_psi(one.components[0], cfg)) <
        1e-13);
}

TEST_CASE("responsibilities examples") {
  std::mt19937_64 rng(36);
  const Matrix x = random_matrix(30, 2, rng);
  const AugmentedData data = augment(x);
  GmmParams one;
  one.components = {random_spd(3, rng)};
  one.logits = Vector(0);
  CHECK((responsibilities(one, data).values.array() == 1.0).all());

  GmmParams twin;
  twin.components = {one.components[0], one.components[0]};
  twin.logits = Vector::Zero(1);
  CHECK((responsibilities(twin, data).values.array() - 0.5).abs().maxCoeff() < 1e-15);

  const GmmParams p = random_params(3, 2, rng);
  const Matrix w = responsibilities(p, data).values;
  const Vector alpha = weights_from_logits(p.logits);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Vector y = data.rows.row(i).transpose();
    Vector num(3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const Matrix& S = p.components[static_cast<std::size_t>(j)].matrix();
      num(j) = alpha(j) / std::sqrt(S.determinant()) * std::exp(-0.5 * y.dot(S.inverse() * y));
    }
    CHECK(rel_diff(Matrix(w.row(i).transpose()), Matrix(num / num.sum())) < 1e-12);
    CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("responsibility underflow is a numeric error") {
  GmmParams p;
  p.components = {SpdPoint(1e-6 * Matrix::Identity(2, 2))};
  p.logits = Vector(0);
  CHECK_THROWS_AS(responsibilities(p, augment(Matrix::Constant(1, 1, 1e200))), NumericError);
}

TEST_CASE("euclidean gradient examples") {
  // Scalar stationarity: S = (1), y = (1), d = 0.
  GmmParams s;
  s.components = {SpdPoint::identity(1)};
  s.logits = Vector(0);
  const EuclideanGradient g0 = euclidean_grad(s, augment(Matrix::Zero(1, 0)), PenaltyConfig::none(0), 1);
  CHECK(std::abs(g0.components[0](0, 0)) < 1e-15);

  // Symmetric components on symmetric data: no pull on the logit.
  Matrix x(4, 1);
  x << -2.0, -1.0, 1.0, 2.0;
  Matrix a(2, 2), b(2, 2);
  a << 2.0, -1.0, -1.0, 1.0;
  b << 2.0, 1.0, 1.0, 1.0;
  GmmParams p;
  p.components = {SpdPoint(a), SpdPoint(b)};
  p.logits = Vector::Zero(1);
  const EuclideanGradient g = euclidean_grad(p, augment(x), PenaltyConfig::none(1), 4);
  CHECK(std::abs(g.logits(0)) < 1e-14);
}

TEST_CASE("euclidean gradient matches finite differences") {
  std::mt19937_64 rng(37);
  for (std::size_t K : {1u, 3u}) {
    const Matrix x = clustered_data(80, 2, K, 2.5, rng);
    const AugmentedData data = augment(x);
    for (bool penalized : {false, true}) {
      const PenaltyConfig cfg = penalized ? penalty_from_data(x) : PenaltyConfig::none(2);
      const GmmParams p = random_params(K, 2, rng);
      const EuclideanGradient g = euclidean_grad(p, data, cfg, data.size());
      for (std::size_t j = 0; j < K; ++j) {
        const Matrix E = random_symmetric(3, rng);
        const double h = 1e-6;
        GmmParams pp = p, pm = p;
        pp.components[j] = SpdPoint(p.components[j].matrix() + h * E);
        pm.components[j] = SpdPoint(p.components[j].matrix() - h * E);
        const double fd = (penalized_objective(pp, data, cfg) - penalized_objective(pm, data, cfg)) / (2 * h);
        CHECK(rel_diff(fd, (g.components[j].array() * E.array()).sum()) < 1e-6);
      }
      for (Eigen::Index k = 0; k + 1 < static_cast<Eigen::Index>(K); ++k) {
        const double h = 1e-6;
        GmmParams pp = p, pm = p;
        pp.logits(k) += h;
        pm.logits(k) -= h;
        const double fd = (penalized_objective(pp, data, cfg) - penalized_objective(pm, data, cfg)) / (2 * h);
        CHECK(rel_diff(fd, g.logits(k)) < 1e-6);
      }
    }
  }
}

TEST_CASE("riemannian gradient examples and directional derivatives") {
  std::mt19937_64 rng(38);
  const Matrix x = clustered_data(60, 2, 2, 3.0, rng);
  const AugmentedData data = augment(x);
  const PenaltyConfig cfg = penalty_from_data(x);

  GmmParams id;
  id.components = {SpdPoint::identity(3), SpdPoint::identity(3)};
  id.logits = Vector::Constant(1, 0.2);
  const EuclideanGradient eg = euclidean_grad(id, data, cfg, data.size());
  const GmmTangent rg = riemannian_grad(id, data, cfg, data.size());
  for (std::size_t j = 0; j < 2; ++j) CHECK(rel_diff(rg.components[j].matrix(), eg.components[j]) < 1e-15);
  CHECK(rg.logit_dirs == eg.logits);

  const GmmParams p = random_params(2, 2, rng);
  const GmmTangent g = riemannian_grad(p, data, cfg, data.size());
  for (int t = 0; t < 20; ++t) {
    const GmmTangent xi = random_product_tangent(p, rng);
    const double h = 1e-5;
    const double fd = (penalized_objective(product_retract(p, h * xi, RetractionKind::exp), data, cfg) -
                       penalized_objective(product_retract(p, -h * xi, RetractionKind::exp), data, cfg)) /
                      (2 * h);
    CHECK(rel_diff(fd, product_metric(p, g, xi)) < 1e-5);
  }
}

TEST_CASE("batch gradients sum to the full gradient") {
  std::mt19937_64 rng(39);
  const Matrix x = clustered_data(30, 2, 2, 3.0, rng);
  const AugmentedData data = augment(x);
  const PenaltyConfig cfg = penalty_from_data(x);
  const GmmParams p = random_params(2, 2, rng);
  const EuclideanGradient full = euclidean_grad(p, data, cfg, data.size());
  EuclideanGradient sum{{Matrix::Zero(3, 3), Matrix::Zero(3, 3)}, Vector::Zero(1)};
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::Index idx[] = {i};
    const EuclideanGradient gi = euclidean_grad(p, data.subset(idx), cfg, data.size());
    for (std::size_t j = 0; j < 2; ++j) sum.components[j] += gi.components[j];
    sum.logits += gi.logits;
  }
  for (std::size_t j = 0; j < 2; ++j) CHECK(rel_diff(sum.components[j], full.components[j]) < 1e-12);
  CHECK(rel_diff(Matrix(sum.logits), Matrix(full.logits)) < 1e-12);
}

TEST_CASE("recover and embed mixtures") {
  Matrix S(2, 2);
  S << 2.0, 1.0, 1.0, 1.0;
  GmmParams p;
  p.components = {SpdPoint(S)};
  p.logits = Vector(0);
  const MixtureEstimate e = recover_mixture(p);
  CHECK(e.means[0](0) == doctest::Approx(1.0));
  CHECK(e.covariances[0](0, 0) == doctest::Approx(1.0));
  CHECK(e.weights(0) == doctest::Approx(1.0));
  CHECK(rel_diff(embed_mixture(e).components[0].matrix(), S) < 1e-15);

  p.components = {SpdPoint::identity(4)};
  const MixtureEstimate id = recover_mixture(p);
  CHECK(id.means[0].norm() == 0.0);
  CHECK(id.covariances[0] == Matrix::Identity(3, 3));

  std::mt19937_64 rng(40);
  MixtureEstimate est;
  est.weights = Vector(3);
  est.weights << 0.2, 0.5, 0.3;
  for (int j = 0; j < 3; ++j) {
    est.means.push_back(random_matrix(4, 1, rng));
    est.covariances.push_back(random_spd(4, rng).matrix());
  }
  const MixtureEstimate back = recover_mixture(embed_mixture(est));
  CHECK(rel_diff(Matrix(back.weights), Matrix(est.weights)) < 1e-12);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(rel_diff(Matrix(back.means[j]), Matrix(est.means[j])) < 1e-12);
    CHECK(rel_diff(back.covariances[j], est.covariances[j]) < 1e-12);
  }

  est.covariances[1] = -Matrix::Identity(4, 4);
  CHECK_THROWS_AS(embed_mixture(est), ArgumentError);
}

TEST_CASE("objective is invariant under component permutation") {
  std::mt19937_64 rng(41);
  const Matrix x = clustered_data(50, 3, 3, 3.0, rng);
  const AugmentedData data = augment(x);
  const PenaltyConfig cfg = penalty_from_data(x);
  const GmmParams p = random_params(3, 3, rng);
  const GmmParams q = permuted(p, {2, 0, 1});
  CHECK(rel_diff(penalized_objective(p, data, cfg), penalized_objective(q, data, cfg)) < 1e-12);
}

TEST_CASE("reformulated value at an embedded mixture carries a constant offset") {
  // With the 2π e^{1/2} scaling each sample gains ½ log(2π) over the ordinary log-likelihood.
  std::mt19937_64 rng(42);
  const Matrix x = clustered_data(100, 3, 2, 3.0, rng);
  const MixtureEstimate mle = gaussian_mle(x);
  const double lhat = reformulated_loglik(embed_mixture(mle), augment(x));
  const double l = mixture_loglik(mle, x);
  CHECK(lhat - l == doctest::Approx(0.5 * 100 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("weights and logits round trip") {
  Vector w(3);
  w << 0.25, 0.25, 0.5;
  const Vector l = logits_from_weights(w);
  CHECK(l(0) == doctest::Approx(std::log(0.5)));
  CHECK(rel_diff(Matrix(weights_from_logits(l)), Matrix(w)) < 1e-15);
}
