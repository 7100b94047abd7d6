#include "riemmix/objective.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace riemmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2π)
constexpr std::size_t kChunkRows = 512;

// log q(y; S) = log(2π) + ½ - (D/2) log(2π) - ½ logdet S - ½ yᵀS⁻¹y with D = d + 1.
double q_constant(Eigen::Index D) { return kLog2Pi + 0.5 - 0.5 * static_cast<double>(D) * kLog2Pi; }

double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void validate(const GmmParams& params, Eigen::Index d, const char* what) {
  const std::size_t K = params.components.size();
  if (K == 0) throw ArgumentError(std::string(what) + ": no mixture components");
  if (params.logits.size() != static_cast<Eigen::Index>(K) - 1) {
    throw ArgumentError(std::string(what) + ": expected " + std::to_string(K - 1) + " logits, got " +
                        std::to_string(params.logits.size()));
  }
  for (std::size_t j = 0; j < K; ++j) {
    if (params.components[j].dim() != d + 1) {
      throw ArgumentError(std::string(what) + ": component " + std::to_string(j) + " has dimension " +
                          std::to_string(params.components[j].dim()) + ", data needs " + std::to_string(d + 1));
    }
  }
}

void validate_penalty(const PenaltyConfig& cfg, Eigen::Index D) {
  if (cfg.Psi.rows() != D || cfg.Psi.cols() != D) {
    throw ArgumentError("penalty: Psi is " + std::to_string(cfg.Psi.rows()) + "x" + std::to_string(cfg.Psi.cols()) +
                        ", expected " + std::to_string(D) + "x" + std::to_string(D));
  }
}

struct Accumulation {
  double loglik = 0.0;
  Vector weight_sums;
  std::vector<Matrix> scatter;  // Σ_i w_ij y_i y_iᵀ
};

// One pass over the rows: per-row log-sum-exp, optional responsibilities and
// weighted scatter matrices. Chunks are reduced in index order.
Accumulation accumulate(const GmmParams& params, const AugmentedData& data, bool with_scatter,
                        Matrix* resp_out) {
  const std::size_t K = params.components.size();
  const Eigen::Index D = data.d + 1;
  const Eigen::Index n = data.size();
  const Vector log_alpha = log_weights(params.logits);
  const double c0 = q_constant(D);

  Vector offsets(static_cast<Eigen::Index>(K));
  std::vector<Matrix> factors(K);
  for (std::size_t j = 0; j < K; ++j) {
    offsets(static_cast<Eigen::Index>(j)) = c0 - 0.5 * params.components[j].log_det() + log_alpha(j);
    factors[j] = params.components[j].cholesky_factor();
  }

  if (resp_out) resp_out->resize(n, static_cast<Eigen::Index>(K));

  const std::size_t chunks = chunk_count(static_cast<std::size_t>(n), kChunkRows);
  std::vector<Accumulation> parts(chunks);
  for_each_chunk(static_cast<std::size_t>(n), kChunkRows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto m = static_cast<Eigen::Index>(end - begin);
    const auto rows = data.rows.middleRows(b, m);
    Matrix lq(m, static_cast<Eigen::Index>(K));
    for (std::size_t j = 0; j < K; ++j) {
      const Matrix z = factors[j].triangularView<Eigen::Lower>().solve(rows.transpose());
      lq.col(static_cast<Eigen::Index>(j)) =
          (offsets(static_cast<Eigen::Index>(j)) - 0.5 * z.colwise().squaredNorm().array()).transpose();
    }
    Accumulation& part = parts[c];
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mx = lq.row(i).maxCoeff();
      if (!std::isfinite(mx)) {
        throw NumericError("responsibilities: every component underflows at row " + std::to_string(b + i));
      }
      const double lse = mx + std::log((lq.row(i).array() - mx).exp().sum());
      part.loglik += lse;
      lq.row(i) = (lq.row(i).array() - lse).exp();
    }
    if (resp_out) resp_out->middleRows(b, m) = lq;
    if (with_scatter) {
      part.weight_sums = lq.colwise().sum().transpose();
      part.scatter.resize(K);
      for (std::size_t j = 0; j < K; ++j) {
        const Matrix weighted = rows.array().colwise() * lq.col(static_cast<Eigen::Index>(j)).array();
        part.scatter[j].noalias() = weighted.transpose() * rows;
      }
    }
  });

  Accumulation total;
  if (with_scatter) {
    total.weight_sums = Vector::Zero(static_cast<Eigen::Index>(K));
    total.scatter.assign(K, Matrix::Zero(D, D));
  }
  for (const auto& part : parts) {
    total.loglik += part.loglik;
    if (with_scatter) {
      total.weight_sums += part.weight_sums;
      for (std::size_t j = 0; j < K; ++j) total.scatter[j] += part.scatter[j];
    }
  }
  return total;
}

Matrix assemble_psi(double kappa, double alpha_over_beta, const Matrix& Lambda, const Vector& lambda_vec) {
  const Eigen::Index d = Lambda.rows();
  Matrix psi(d + 1, d + 1);
  psi.topLeftCorner(d, d) = alpha_over_beta * Lambda + kappa * lambda_vec * lambda_vec.transpose();
  psi.topRightCorner(d, 1) = kappa * lambda_vec;
  psi.bottomLeftCorner(1, d) = kappa * lambda_vec.transpose();
  psi(d, d) = kappa;
  return psi;
}

void check_prior_inputs(const Matrix& Lambda, const Vector& lambda_vec) {
  if (Lambda.rows() != Lambda.cols() || Lambda.rows() != lambda_vec.size()) {
    throw ArgumentError("penalty: Lambda and lambda_vec dimensions disagree");
  }
  if (!Lambda.allFinite() || !lambda_vec.allFinite()) throw NumericError("penalty: non-finite prior parameters");
  if (!SpdPoint::try_make(Lambda)) throw ArgumentError("penalty: Lambda is not positive definite");
}

void check_psd(const Matrix& psi) {
  const double scale = std::max(1.0, psi.cwiseAbs().maxCoeff());
  if (min_eigenvalue(psi) < -1e-12 * scale) {
    throw ArgumentError("penalty: Psi is indefinite (kappa < 1 makes the derived alpha negative)");
  }
}

}  // namespace

// ---------------------------------------------------------------- data

AugmentedData AugmentedData::subset(std::span<const Eigen::Index> indices) const {
  AugmentedData out;
  out.d = d;
  out.rows.resize(static_cast<Eigen::Index>(indices.size()), rows.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Eigen::Index i = indices[k];
    if (i < 0 || i >= rows.rows()) throw ArgumentError("AugmentedData::subset: index out of range");
    out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(i);
  }
  return out;
}

AugmentedData augment(const Matrix& x) {
  if (!x.allFinite()) throw NumericError("augment: non-finite input");
  AugmentedData out;
  out.d = x.cols();
  out.rows.resize(x.rows(), x.cols() + 1);
  out.rows.leftCols(x.cols()) = x;
  out.rows.col(x.cols()).setOnes();
  return out;
}

// ---------------------------------------------------------------- penalties

PenaltyConfig PenaltyConfig::none(Eigen::Index d) {
  PenaltyConfig cfg;
  cfg.Lambda = Matrix::Zero(d, d);
  cfg.lambda_vec = Vector::Zero(d);
  cfg.Psi = Matrix::Zero(d + 1, d + 1);
  return cfg;
}

PenaltyConfig build_psi_matrix(double kappa, double nu, double beta, const Matrix& Lambda, const Vector& lambda_vec,
                               double zeta) {
  check_prior_inputs(Lambda, lambda_vec);
  if (!(kappa > 0.0)) throw ArgumentError("penalty: kappa must be positive");
  if (!(beta > 0.0)) throw ArgumentError("penalty: beta must be positive");
  if (!(zeta >= 0.0)) throw ArgumentError("penalty: zeta must be nonnegative");
  const double d = static_cast<double>(Lambda.rows());
  const double dof = d + nu + 1.0;
  if (!(dof > 0.0)) throw ArgumentError("penalty: d + nu + 1 must be positive");

  PenaltyConfig cfg;
  cfg.kappa = kappa;
  cfg.nu = nu;
  cfg.beta = beta;
  cfg.zeta = zeta;
  cfg.alpha_w = beta * (kappa - 1.0) / dof;
  cfg.rho = cfg.alpha_w * dof + beta;
  cfg.Lambda = Lambda;
  cfg.lambda_vec = lambda_vec;
  cfg.Psi = assemble_psi(kappa, cfg.alpha_w / beta, Lambda, lambda_vec);
  check_psd(cfg.Psi);
  return cfg;
}

PenaltyConfig raw_penalty(double rho, double kappa, double alpha_w, double beta, const Matrix& Lambda,
                          const Vector& lambda_vec, double zeta) {
  check_prior_inputs(Lambda, lambda_vec);
  if (!(beta > 0.0)) throw ArgumentError("penalty: beta must be positive");
  if (!(rho >= 0.0) || !(kappa >= 0.0) || !(zeta >= 0.0)) {
    throw ArgumentError("penalty: rho, kappa and zeta must be nonnegative");
  }
  PenaltyConfig cfg;
  cfg.kappa = kappa;
  cfg.nu = std::numeric_limits<double>::quiet_NaN();
  cfg.beta = beta;
  cfg.alpha_w = alpha_w;
  cfg.rho = rho;
  cfg.zeta = zeta;
  cfg.Lambda = Lambda;
  cfg.lambda_vec = lambda_vec;
  cfg.Psi = assemble_psi(kappa, alpha_w / beta, Lambda, lambda_vec);
  check_psd(cfg.Psi);
  return cfg;
}

PenaltyConfig penalty_from_data(const Matrix& x, const PenaltyDefaults& opts) {
  if (x.rows() < 2) throw ArgumentError("penalty_from_data: need at least two samples");
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows());
  const double nu = opts.nu < 0.0 ? static_cast<double>(x.cols()) + 1.0 : opts.nu;
  return build_psi_matrix(opts.kappa, nu, opts.beta, opts.lambda_scale * cov, mean, opts.zeta);
}

// ---------------------------------------------------------------- weights

Vector log_weights(const Vector& logits) {
  Vector ext(logits.size() + 1);
  ext.head(logits.size()) = logits;
  ext(logits.size()) = 0.0;
  return ext.array() - log_sum_exp(ext);
}

Vector weights_from_logits(const Vector& logits) { return log_weights(logits).array().exp(); }

Vector logits_from_weights(const Vector& weights) {
  const Eigen::Index K = weights.size();
  if (K == 0) throw ArgumentError("logits_from_weights: empty weight vector");
  if ((weights.array() <= 0.0).any() || !weights.allFinite()) {
    throw ArgumentError("logits_from_weights: weights must be positive");
  }
  return (weights.head(K - 1).array() / weights(K - 1)).log();
}

// ---------------------------------------------------------------- objective

double log_q_density(const Vector& y, const SpdPoint& S) {
  if (y.size() != S.dim()) throw ArgumentError("log_q_density: dimension mismatch");
  const Vector z = S.whiten(y);
  return q_constant(S.dim()) - 0.5 * S.log_det() - 0.5 * z.squaredNorm();
}

double reformulated_loglik(const GmmParams& params, const AugmentedData& data) {
  validate(params, data.d, "reformulated_loglik");
  if (data.empty()) return 0.0;
  return accumulate(params, data, false, nullptr).loglik;
}

double penalty_psi(const SpdPoint& S, const PenaltyConfig& cfg) {
  if (cfg.rho == 0.0 && cfg.beta == 0.0) return 0.0;
  validate_penalty(cfg, S.dim());
  return -0.5 * cfg.rho * S.log_det() - 0.5 * cfg.beta * S.solve(cfg.Psi).trace();
}

double penalty_phi(const Vector& logits, double zeta, std::size_t K) {
  if (logits.size() != static_cast<Eigen::Index>(K) - 1) throw ArgumentError("penalty_phi: expected K-1 logits");
  if (zeta == 0.0) return 0.0;
  Vector ext(logits.size() + 1);
  ext.head(logits.size()) = logits;
  ext(logits.size()) = 0.0;
  return zeta * ext.sum() - static_cast<double>(K) * zeta * log_sum_exp(ext);
}

double penalized_objective(const GmmParams& params, const AugmentedData& data, const PenaltyConfig& cfg) {
  return evaluate_objective(params, data, cfg, data.size(), false).value;
}

Responsibilities responsibilities(const GmmParams& params, const AugmentedData& data) {
  validate(params, data.d, "responsibilities");
  Responsibilities r;
  accumulate(params, data, false, &r.values);
  return r;
}

ObjectiveEvaluation evaluate_objective(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                                       Eigen::Index n_total, bool with_gradient) {
  validate(params, batch.d, "penalized objective");
  if (n_total < batch.size()) throw ArgumentError("penalized objective: n_total smaller than the batch");
  const std::size_t K = params.components.size();
  const Eigen::Index D = batch.d + 1;
  const bool penalized = cfg.rho != 0.0 || cfg.beta != 0.0;
  if (penalized) validate_penalty(cfg, D);
  // Share of the penalty carried by this batch.
  const double share = n_total == 0 ? 1.0 : static_cast<double>(batch.size()) / static_cast<double>(n_total);

  Accumulation acc;
  if (!batch.empty()) {
    acc = accumulate(params, batch, with_gradient, nullptr);
  } else if (with_gradient) {
    acc.weight_sums = Vector::Zero(static_cast<Eigen::Index>(K));
    acc.scatter.assign(K, Matrix::Zero(D, D));
  }

  ObjectiveEvaluation out;
  double penalty = penalty_phi(params.logits, cfg.zeta, K);
  for (const auto& S : params.components) penalty += penalty_psi(S, cfg);
  out.value = acc.loglik + share * penalty;
  if (!std::isfinite(out.value)) throw NumericError("penalized objective: non-finite value");
  if (!with_gradient) return out;

  out.egrad.components.reserve(K);
  for (std::size_t j = 0; j < K; ++j) {
    const Matrix inv = params.components[j].inverse();
    Matrix g = -0.5 * acc.weight_sums(static_cast<Eigen::Index>(j)) * inv + 0.5 * inv * acc.scatter[j] * inv;
    if (penalized) g += share * (-0.5 * cfg.rho * inv + 0.5 * cfg.beta * inv * cfg.Psi * inv);
    out.egrad.components.push_back(0.5 * (g + g.transpose()));
  }
  const Vector alpha = weights_from_logits(params.logits);
  const double nb = static_cast<double>(batch.size());
  const double Kd = static_cast<double>(K);
  out.egrad.logits.resize(static_cast<Eigen::Index>(K) - 1);
  for (Eigen::Index k = 0; k + 1 < static_cast<Eigen::Index>(K); ++k) {
    out.egrad.logits(k) =
        acc.weight_sums(k) - nb * alpha(k) + share * (cfg.zeta - Kd * cfg.zeta * alpha(k));
  }
  return out;
}

EuclideanGradient euclidean_grad(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                                 Eigen::Index n_total) {
  if (batch.empty()) throw ArgumentError("euclidean_grad: empty batch");
  return evaluate_objective(params, batch, cfg, n_total, true).egrad;
}

GmmTangent riemannian_grad(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                           Eigen::Index n_total) {
  const EuclideanGradient eg = euclidean_grad(params, batch, cfg, n_total);
  GmmTangent t;
  t.components.reserve(eg.components.size());
  for (std::size_t j = 0; j < eg.components.size(); ++j) {
    t.components.push_back(egrad_to_rgrad(params.components[j], eg.components[j]));
  }
  t.logit_dirs = eg.logits;
  return t;
}

// ---------------------------------------------------------------- parameter maps

MixtureEstimate recover_mixture(const GmmParams& params) {
  if (params.components.empty()) throw ArgumentError("recover_mixture: no components");
  if (params.logits.size() != static_cast<Eigen::Index>(params.components.size()) - 1) {
    throw ArgumentError("recover_mixture: expected K-1 logits");
  }
  MixtureEstimate est;
  est.weights = weights_from_logits(params.logits);
  for (const auto& comp : params.components) {
    const Matrix& S = comp.matrix();
    const Eigen::Index d = S.rows() - 1;
    const double s = S(d, d);
    const Vector t = S.topRightCorner(d, 1) / s;
    Matrix U = S.topLeftCorner(d, d) - s * t * t.transpose();
    est.means.push_back(t);
    est.covariances.push_back(0.5 * (U + U.transpose()));
  }
  return est;
}

GmmParams embed_mixture(const MixtureEstimate& est) {
  const std::size_t K = est.means.size();
  if (K == 0 || est.covariances.size() != K || est.weights.size() != static_cast<Eigen::Index>(K)) {
    throw ArgumentError("embed_mixture: inconsistent component counts");
  }
  GmmParams p;
  p.components.reserve(K);
  const Eigen::Index d = est.means.front().size();
  for (std::size_t j = 0; j < K; ++j) {
    const Vector& mu = est.means[j];
    const Matrix& cov = est.covariances[j];
    if (mu.size() != d || cov.rows() != d || cov.cols() != d) throw ArgumentError("embed_mixture: dimension mismatch");
    if (!SpdPoint::try_make(cov)) {
      throw ArgumentError("embed_mixture: covariance " + std::to_string(j) + " is not positive definite");
    }
    Matrix S(d + 1, d + 1);
    S.topLeftCorner(d, d) = cov + mu * mu.transpose();
    S.topRightCorner(d, 1) = mu;
    S.bottomLeftCorner(1, d) = mu.transpose();
    S(d, d) = 1.0;
    p.components.emplace_back(S);
  }
  p.logits = logits_from_weights(est.weights);
  return p;
}

double gaussian_loglik(const Vector& mean, const Matrix& cov, const Matrix& x) {
  const Eigen::Index d = mean.size();
  if (cov.rows() != d || x.cols() != d) throw ArgumentError("gaussian_loglik: dimension mismatch");
  const SpdPoint sigma(cov);
  const Matrix z = sigma.whiten((x.rowwise() - mean.transpose()).transpose());
  const double n = static_cast<double>(x.rows());
  return -0.5 * n * (static_cast<double>(d) * kLog2Pi + sigma.log_det()) - 0.5 * z.squaredNorm();
}

double mixture_loglik(const MixtureEstimate& est, const Matrix& x) {
  const std::size_t K = est.num_components();
  const Eigen::Index d = est.dim();
  if (x.cols() != d) throw ArgumentError("mixture_loglik: dimension mismatch");
  Matrix lp(x.rows(), static_cast<Eigen::Index>(K));
  for (std::size_t j = 0; j < K; ++j) {
    const SpdPoint sigma(est.covariances[j]);
    const Matrix z = sigma.whiten((x.rowwise() - est.means[j].transpose()).transpose());
    lp.col(static_cast<Eigen::Index>(j)) =
        (std::log(est.weights(static_cast<Eigen::Index>(j))) -
         0.5 * (static_cast<double>(d) * kLog2Pi + sigma.log_det()) - 0.5 * z.colwise().squaredNorm().array())
            .transpose();
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += log_sum_exp(lp.row(i).transpose());
  return total;
}

MixtureEstimate gaussian_mle(const Matrix& x) {
  if (x.rows() < 1) throw ArgumentError("gaussian_mle: no samples");
  MixtureEstimate est;
  est.weights = Vector::Ones(1);
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  est.means.push_back(mean);
  est.covariances.push_back(centered.transpose() * centered / static_cast<double>(x.rows()));
  return est;
}

}  // namespace riemmix
