#pragma once

#include "riemmix/product.hpp"

#include <span>
#include <vector>

namespace riemmix {

/// Samples lifted to y = [x; 1]. `rows` is n × (d+1).
struct AugmentedData {
  Eigen::Index d = 0;
  Matrix rows;

  Eigen::Index size() const noexcept { return rows.rows(); }
  bool empty() const noexcept { return rows.rows() == 0; }
  AugmentedData subset(std::span<const Eigen::Index> indices) const;
};

/// Throws NumericError on non-finite input.
AugmentedData augment(const Matrix& x);

/// Conjugate-prior penalty on the augmented matrices plus the Dirichlet
/// penalty on the weights.
///
///   ψ(S) = -ρ/2 logdet S - β/2 trace(Ψ S⁻¹)
///   φ(ω) = ζ Σ_k ω_k - K ζ log Σ_k exp ω_k
///
/// with Ψ = [[(α/β)Λ + κλλᵀ, κλ], [κλᵀ, κ]].
struct PenaltyConfig {
  double kappa = 0.0;
  double nu = 0.0;
  double beta = 0.0;
  double alpha_w = 0.0;
  double rho = 0.0;
  double zeta = 0.0;
  Matrix Lambda;
  Vector lambda_vec;
  Matrix Psi;

  Eigen::Index dim() const noexcept { return lambda_vec.size(); }

  /// Penalties switched off: ρ = β = ζ = 0 and Ψ = 0 (plain maximum likelihood).
  static PenaltyConfig none(Eigen::Index d);
};

/// Derives α = β(κ-1)/(d+ν+1) and ρ = α(d+ν+1)+β, then assembles Ψ.
/// Throws ArgumentError if Λ is not SPD, κ ≤ 0, β ≤ 0, or Ψ comes out indefinite
/// (which happens for κ < 1 because α turns negative).
PenaltyConfig build_psi_matrix(double kappa, double nu, double beta, const Matrix& Lambda,
                               const Vector& lambda_vec, double zeta = 0.0);

/// Sets ρ, κ, α and β independently (no compatibility identities) and assembles Ψ.
PenaltyConfig raw_penalty(double rho, double kappa, double alpha_w, double beta, const Matrix& Lambda,
                          const Vector& lambda_vec, double zeta);

/// Data-driven defaults: Λ = scale · sample covariance, λ = sample mean.
struct PenaltyDefaults {
  double kappa = 2.0;
  double beta = 1.0;
  double nu = -1.0;  ///< negative means d + 1
  double zeta = 1.0;
  double lambda_scale = 0.01;
};
PenaltyConfig penalty_from_data(const Matrix& x, const PenaltyDefaults& opts = {});

/// Standard-form mixture.
struct MixtureEstimate {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;

  std::size_t num_components() const noexcept { return means.size(); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
};

/// Posterior membership weights, n × K; rows sum to one.
struct Responsibilities {
  Matrix values;
};

/// log α_j for the logits with the implicit ω_K = 0.
Vector log_weights(const Vector& logits);
Vector weights_from_logits(const Vector& logits);
/// ω_k = log(α_k / α_K), k < K.
Vector logits_from_weights(const Vector& weights);

/// log q(y; S) = log(2π) + ½ + log p_N(y; 0, S) in dimension d+1.
double log_q_density(const Vector& y, const SpdPoint& S);

/// Σ_i log Σ_j softmax(ω)_j q(y_i; S_j), evaluated with log-sum-exp.
double reformulated_loglik(const GmmParams& params, const AugmentedData& data);

double penalty_psi(const SpdPoint& S, const PenaltyConfig& cfg);
double penalty_phi(const Vector& logits, double zeta, std::size_t K);

/// reformulated_loglik + Σ_j ψ(S_j) + φ(ω)
double penalized_objective(const GmmParams& params, const AugmentedData& data, const PenaltyConfig& cfg);

/// Throws NumericError naming the row when every component underflows.
Responsibilities responsibilities(const GmmParams& params, const AugmentedData& data);

struct EuclideanGradient {
  std::vector<Matrix> components;
  Vector logits;
};

/// Sum over the batch of per-sample gradients ∇f_i, where each f_i carries
/// 1/n_total of the penalty terms. Over the full data set this is the exact
/// gradient of penalized_objective.
EuclideanGradient euclidean_grad(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                                 Eigen::Index n_total);

/// euclidean_grad converted factor-wise with egrad_to_rgrad.
GmmTangent riemannian_grad(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                           Eigen::Index n_total);

/// Batch value and (optionally) gradient with shared factorizations. The value
/// is Σ_{i∈batch} log-likelihood_i + |batch|/n_total · (Σ_j ψ(S_j) + φ(ω)).
struct ObjectiveEvaluation {
  double value = 0.0;
  EuclideanGradient egrad;
};
ObjectiveEvaluation evaluate_objective(const GmmParams& params, const AugmentedData& batch, const PenaltyConfig& cfg,
                                       Eigen::Index n_total, bool with_gradient);

/// Reads (weights, means, covariances) off the block form
/// S = [[U + s t tᵀ, s t], [s tᵀ, s]].
MixtureEstimate recover_mixture(const GmmParams& params);

/// Inverse of recover_mixture with s = 1. Throws ArgumentError for non-SPD
/// covariances or non-positive weights.
GmmParams embed_mixture(const MixtureEstimate& est);

/// Σ_i log p_N(x_i; μ, Σ)
double gaussian_loglik(const Vector& mean, const Matrix& cov, const Matrix& x);

/// Σ_i log Σ_j α_j p_N(x_i; μ_j, Σ_j)
double mixture_loglik(const MixtureEstimate& est, const Matrix& x);

/// Closed-form single-Gaussian maximum likelihood estimate (covariance divides by n).
MixtureEstimate gaussian_mle(const Matrix& x);

}  // namespace riemmix
