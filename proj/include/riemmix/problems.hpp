#pragma once

#include "riemmix/objective.hpp"
#include "riemmix/optimizers.hpp"

#include <memory>

namespace riemmix {

/// Minimization form of the penalized mixture objective on the per-sample
/// scale: value = -F/n, where F is penalized_objective. Stochastic gradients
/// are means of per-sample gradients, each sample carrying 1/n of the penalty.
SolverProblem make_gmm_problem(std::shared_ptr<const AugmentedData> data, PenaltyConfig cfg);

/// Single Gaussian in its original parametrization: -(1/n) Σ_i log p_N(x_i; μ, Σ)
/// over P^d × R^d. The point stores Σ as its only SPD factor and μ in `logits`.
SolverProblem make_mean_cov_problem(const Matrix& x);

/// Point for make_mean_cov_problem.
GmmParams mean_cov_point(const Vector& mean, const Matrix& cov);

/// Objective of the reformulated problem converted back to the maximization
/// scale, Σ_i log-likelihood + penalties.
double total_objective(double mean_scale_value, Eigen::Index n);

}  // namespace riemmix
