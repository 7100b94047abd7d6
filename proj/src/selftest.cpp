#include "riemmix/harness.hpp"

#include "riemmix/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace riemmix {

namespace {

Matrix random_symmetric(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = normal(rng);
  }
  return 0.5 * (a + a.transpose());
}

SpdPoint random_spd(Eigen::Index d, std::mt19937_64& rng) {
  const Matrix a = random_symmetric(d, rng);
  return SpdPoint(a * a.transpose() + 0.5 * Matrix::Identity(d, d));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

SelftestGroup manifold_group() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (Eigen::Index d : {2, 5}) {
    for (int t = 0; t < 10; ++t) {
      const SpdPoint a = random_spd(d, rng);
      const SpdPoint b = random_spd(d, rng);
      const TangentVector xi(0.3 * random_symmetric(d, rng));
      const TangentVector eta(random_symmetric(d, rng));
      const TangentVector back = log_map(a, exp_map(a, xi));
      worst = std::max(worst, (back.matrix() - xi.matrix()).norm() / std::max(1.0, xi.matrix().norm()));
      worst = std::max(worst, (geodesic(a, b, 0.0).matrix() - a.matrix()).norm() / a.matrix().norm());
      worst = std::max(worst, (geodesic(a, b, 1.0).matrix() - b.matrix()).norm() / b.matrix().norm());
      const TransportOperator T(a, b);
      worst = std::max(worst, rel_err(metric(b, T(xi), T(eta)), metric(a, xi, eta)));
      worst = std::max(worst, (exp_map(a, TangentVector::zero(d)).matrix() - a.matrix()).norm());
    }
  }
  std::ostringstream os;
  os << "worst relative error " << worst;
  return {"manifold", worst <= 1e-8, os.str()};
}

SelftestGroup gradient_group(bool perturb) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  const Eigen::Index d = 3;
  Matrix x(60, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = normal(rng) + (i % 2 ? 2.0 : -2.0);
  }
  const AugmentedData aug = augment(x);
  const PenaltyConfig cfg = penalty_from_data(x);
  GmmParams p;
  for (int j = 0; j < 2; ++j) p.components.push_back(random_spd(d + 1, rng));
  p.logits = Vector::Constant(1, 0.3);

  GmmTangent g = riemannian_grad(p, aug, cfg, aug.size());
  if (perturb) g.components[0] += TangentVector(1e-3 * Matrix::Identity(d + 1, d + 1));

  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    GmmTangent dir;
    for (int j = 0; j < 2; ++j) dir.components.emplace_back(random_symmetric(d + 1, rng));
    dir.logit_dirs = Vector::Constant(1, normal(rng));
    const double h = 1e-5;
    const double fp = penalized_objective(product_retract(p, h * dir, RetractionKind::exp), aug, cfg);
    const double fm = penalized_objective(product_retract(p, -h * dir, RetractionKind::exp), aug, cfg);
    const double fd = (fp - fm) / (2.0 * h);
    const double an = product_metric(p, g, dir);
    worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
  }
  std::ostringstream os;
  os << "worst relative error " << worst;
  return {"gradient", worst <= 1e-5, os.str()};
}

SelftestGroup wolfe_group() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.1, 10.0);
  int bad = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const double a = unit(rng);
    const double b = -unit(rng);
    const double c = unit(rng) * 0.1;
    auto phi = [=](double s) { return 0.5 * a * s * s + b * s + c * s * s * s * s; };
    auto dphi = [=](double s) { return a * s + b + 4.0 * c * s * s * s; };
    const ScalarProbe probe{phi(0.0), dphi(0.0), [&](double s) { return ProbeSample{phi(s), dphi(s)}; }};
    WolfeConfig cfg;
    cfg.alpha_init = unit(rng);
    const LineSearchResult r = wolfe_search(probe, cfg);
    if (r.status != LineSearchStatus::wolfe ||
        !satisfies_strong_wolfe(r.alpha, phi(0.0), dphi(0.0), phi(r.alpha), dphi(r.alpha), cfg.c1, cfg.c2)) {
      ++bad;
    }
  }
  return {"wolfe", bad == 0, std::to_string(trials - bad) + "/" + std::to_string(trials) + " certified"};
}

SelftestGroup concavity_group() {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal;
  const Eigen::Index d = 3;
  Matrix x(40, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = normal(rng);
  }
  const AugmentedData aug = augment(x);
  const PenaltyConfig cfg = penalty_from_data(x);
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 20; ++t) {
    GmmParams p0, p1, pm;
    p0.components.push_back(random_spd(d + 1, rng));
    p1.components.push_back(random_spd(d + 1, rng));
    pm.components.push_back(geodesic(p0.components[0], p1.components[0], 0.5));
    p0.logits = p1.logits = pm.logits = Vector(0);
    const double f0 = penalized_objective(p0, aug, cfg);
    const double f1 = penalized_objective(p1, aug, cfg);
    const double fm = penalized_objective(pm, aug, cfg);
    const double slack = fm - 0.5 * (f0 + f1);
    worst = std::min(worst, slack / std::max(1.0, std::abs(fm)));
  }
  std::ostringstream os;
  os << "worst midpoint slack " << worst;
  return {"concavity", worst >= -1e-10, os.str()};
}

template <class F>
SelftestGroup safely(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {name, false, e.what()};
  }
}

}  // namespace

std::vector<SelftestGroup> run_selftest(bool perturb_gradient) {
  return {safely("manifold", manifold_group), safely("gradient", [&] { return gradient_group(perturb_gradient); }),
          safely("wolfe", wolfe_group), safely("concavity", concavity_group)};
}

}  // namespace riemmix
