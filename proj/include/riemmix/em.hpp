#pragma once

#include "riemmix/objective.hpp"
#include "riemmix/optimizers.hpp"

namespace riemmix {

struct EmOptions {
  int max_iterations = 1000;
  /// Stop when the per-sample objective changes by less than this.
  double obj_tol = 1e-6;
  double max_evals = std::numeric_limits<double>::infinity();
  bool record_wall_time = false;
  /// Adds the Riemannian gradient norm of the per-sample objective to each
  /// trace record. Monitoring only; not counted as evaluations.
  bool record_grad_norm = true;
};

struct EmResult {
  MixtureEstimate estimate;
  Responsibilities responsibilities;
  double objective = 0.0;  ///< penalized log-likelihood (maximization scale)
  /// Objective column holds -objective/n so traces line up with the solvers.
  /// One E-step plus one M-step counts as two evaluations.
  ConvergenceTrace trace;
  Termination termination = Termination::iteration_limit;
  int iterations = 0;
  double evals = 0.0;
};

/// Maximum a posteriori EM. The M-step is the exact maximizer of the
/// penalized objective with responsibilities held fixed:
///   α_j ∝ N_j + ζ
///   μ_j = (Σ_i w_ij x_i + βκ λ) / (N_j + βκ)
///   Σ_j = (α Λ + βκ (μ_j - λ)(μ_j - λ)ᵀ + Σ_i w_ij (x_i - μ_j)(x_i - μ_j)ᵀ) / (N_j + ρ)
/// With PenaltyConfig::none this is plain maximum likelihood EM.
/// Throws ArgumentError if K < 1 or n ≤ K, NumericError on responsibility
/// underflow or a covariance losing positive definiteness.
EmResult em_fit(const Matrix& x, std::size_t K, const PenaltyConfig& cfg, const MixtureEstimate& init,
                const EmOptions& opts = {});

/// One M-step from fixed responsibilities.
MixtureEstimate em_m_step(const Matrix& x, const Responsibilities& resp, const PenaltyConfig& cfg);

/// penalized_objective(embed_mixture(est), augment(x), cfg)
double em_objective(const MixtureEstimate& est, const Matrix& x, const PenaltyConfig& cfg);

}  // namespace riemmix
