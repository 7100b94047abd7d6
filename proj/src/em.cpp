#include "riemmix/em.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/parallel.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace riemmix {

namespace {

double grad_norm_at(const GmmParams& params, const AugmentedData& aug, const PenaltyConfig& cfg) {
  const GmmTangent g = riemannian_grad(params, aug, cfg, aug.size());
  const double n = static_cast<double>(aug.size());
  return product_norm(params, g) / n;
}

}  // namespace

double em_objective(const MixtureEstimate& est, const Matrix& x, const PenaltyConfig& cfg) {
  return penalized_objective(embed_mixture(est), augment(x), cfg);
}

MixtureEstimate em_m_step(const Matrix& x, const Responsibilities& resp, const PenaltyConfig& cfg) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index K = resp.values.cols();
  if (resp.values.rows() != n) throw ArgumentError("responsibilities do not match the data");
  const bool has_prior = cfg.lambda_vec.size() == d && cfg.Lambda.rows() == d;
  const double bk = cfg.beta * cfg.kappa;
  const Vector lambda = has_prior ? cfg.lambda_vec : Vector::Zero(d);

  MixtureEstimate est;
  est.weights.resize(K);
  est.means.resize(static_cast<std::size_t>(K));
  est.covariances.resize(static_cast<std::size_t>(K));
  const Vector counts = resp.values.colwise().sum().transpose();

  for_each_chunk(static_cast<std::size_t>(K), 1, [&](std::size_t, std::size_t begin, std::size_t) {
    const Eigen::Index j = static_cast<Eigen::Index>(begin);
    const Vector w = resp.values.col(j);
    const double nj = counts(j);
    const double mean_den = nj + bk;
    if (!(mean_den > 0.0)) {
      throw NumericError("EM: component " + std::to_string(j) + " has no responsibility mass and no prior");
    }
    const Vector mu = (x.transpose() * w + bk * lambda) / mean_den;
    const Matrix centered = x.rowwise() - mu.transpose();
    Matrix scatter = centered.transpose() * w.asDiagonal() * centered;
    if (has_prior) {
      const Vector dm = mu - lambda;
      scatter += cfg.alpha_w * cfg.Lambda + bk * dm * dm.transpose();
    }
    const double cov_den = nj + cfg.rho;
    if (!(cov_den > 0.0)) throw NumericError("EM: component " + std::to_string(j) + " has an empty covariance update");
    Matrix cov = scatter / cov_den;
    if (!SpdPoint::try_make(cov)) {
      throw NumericError("EM: covariance of component " + std::to_string(j) + " lost positive definiteness");
    }
    est.means[begin] = mu;
    est.covariances[begin] = std::move(cov);
  });

  const Vector mass = (counts.array() + cfg.zeta).matrix();
  if (!(mass.minCoeff() > 0.0)) throw NumericError("EM: a mixture weight collapsed to zero");
  est.weights = mass / mass.sum();
  return est;
}

EmResult em_fit(const Matrix& x, std::size_t K, const PenaltyConfig& cfg, const MixtureEstimate& init,
                const EmOptions& opts) {
  if (K < 1) throw ArgumentError("EM needs K >= 1");
  if (x.rows() <= static_cast<Eigen::Index>(K)) throw ArgumentError("EM needs more samples than components");
  if (init.num_components() != K || init.dim() != x.cols()) {
    throw ArgumentError("EM initial estimate does not match K and the data dimension");
  }
  const auto start = std::chrono::steady_clock::now();
  auto wall = [&] {
    if (!opts.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  const AugmentedData aug = augment(x);
  const double n = static_cast<double>(x.rows());
  EmResult res;
  res.estimate = init;

  auto evaluate = [&] {
    const GmmParams params = embed_mixture(res.estimate);
    res.objective = penalized_objective(params, aug, cfg);
    if (!std::isfinite(res.objective)) throw NumericError("EM: objective is not finite");
    res.responsibilities = responsibilities(params, aug);
    res.evals += 2.0;
    const double gn = opts.record_grad_norm ? grad_norm_at(params, aug, cfg) : 0.0;
    res.trace.records.push_back({res.evals, -res.objective / n, gn, wall()});
  };
  evaluate();

  for (;;) {
    if (res.iterations >= opts.max_iterations) {
      res.termination = Termination::iteration_limit;
      break;
    }
    if (res.evals >= opts.max_evals) {
      res.termination = Termination::evaluation_limit;
      break;
    }
    const double before = res.objective;
    res.estimate = em_m_step(x, res.responsibilities, cfg);
    ++res.iterations;
    evaluate();
    if (opts.obj_tol > 0.0 && std::abs(res.objective - before) / n < opts.obj_tol) {
      res.termination = Termination::objective_change;
      break;
    }
  }
  return res;
}

}  // namespace riemmix
