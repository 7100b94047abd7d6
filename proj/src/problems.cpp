#include "riemmix/problems.hpp"

#include "riemmix/errors.hpp"

#include <cmath>

namespace riemmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

GmmTangent to_riemannian(const GmmParams& params, const EuclideanGradient& eg, double scale) {
  GmmTangent t;
  t.components.reserve(eg.components.size());
  for (std::size_t j = 0; j < eg.components.size(); ++j) {
    t.components.push_back(egrad_to_rgrad(params.components[j], scale * eg.components[j]));
  }
  t.logit_dirs = scale * eg.logits;
  return t;
}

}  // namespace

SolverProblem make_gmm_problem(std::shared_ptr<const AugmentedData> data, PenaltyConfig cfg) {
  if (!data || data->empty()) throw ArgumentError("mixture problem needs at least one sample");
  auto pen = std::make_shared<const PenaltyConfig>(std::move(cfg));
  const Eigen::Index n = data->size();
  const double inv_n = 1.0 / static_cast<double>(n);

  SolverProblem p;
  p.n_samples = n;
  p.value = [data, pen, n, inv_n](const GmmParams& x) {
    return -inv_n * evaluate_objective(x, *data, *pen, n, false).value;
  };
  p.value_and_grad = [data, pen, n, inv_n](const GmmParams& x) {
    ObjectiveEvaluation ev = evaluate_objective(x, *data, *pen, n, true);
    return ValueAndGrad{-inv_n * ev.value, to_riemannian(x, ev.egrad, -inv_n)};
  };
  p.stochastic_grad = [data, pen, n](const GmmParams& x, std::span<const Eigen::Index> idx) {
    if (idx.empty()) throw ArgumentError("stochastic gradient needs a non-empty batch");
    const AugmentedData batch = data->subset(idx);
    const EuclideanGradient eg = euclidean_grad(x, batch, *pen, n);
    return to_riemannian(x, eg, -1.0 / static_cast<double>(idx.size()));
  };
  return p;
}

GmmParams mean_cov_point(const Vector& mean, const Matrix& cov) {
  GmmParams p;
  p.components.emplace_back(cov);
  p.logits = mean;
  return p;
}

SolverProblem make_mean_cov_problem(const Matrix& x) {
  if (x.rows() == 0) throw ArgumentError("mean/covariance problem needs at least one sample");
  const Eigen::Index d = x.cols();
  const double n = static_cast<double>(x.rows());
  const Vector xbar = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - xbar.transpose();
  const Matrix scatter = (centered.transpose() * centered) / n;

  struct Parts {
    double value;
    Matrix sigma_inv_c;  // Σ⁻¹ C_μ
    Vector diff;         // x̄ - μ
  };
  auto parts = [xbar, scatter, d](const GmmParams& p) {
    if (p.components.size() != 1 || p.logits.size() != d || p.components[0].dim() != d) {
      throw ArgumentError("mean/covariance point has the wrong shape");
    }
    const SpdPoint& sigma = p.components[0];
    const Vector diff = xbar - p.logits;
    const Matrix c_mu = scatter + diff * diff.transpose();
    Parts out;
    out.sigma_inv_c = sigma.solve(c_mu);
    out.diff = diff;
    out.value = 0.5 * (static_cast<double>(d) * kLog2Pi + sigma.log_det() + out.sigma_inv_c.trace());
    return out;
  };

  SolverProblem prob;
  prob.n_samples = x.rows();
  prob.value = [parts](const GmmParams& p) { return parts(p).value; };
  prob.value_and_grad = [parts](const GmmParams& p) {
    const Parts q = parts(p);
    const SpdPoint& sigma = p.components[0];
    // Euclidean gradient in Σ is ½Σ⁻¹(I - C_μΣ⁻¹); the Riemannian one is ½(Σ - C_μ).
    const Matrix c_mu = sigma.matrix() * q.sigma_inv_c;
    GmmTangent g;
    g.components.emplace_back(0.5 * (sigma.matrix() - c_mu));
    g.logit_dirs = -sigma.solve(q.diff);
    return ValueAndGrad{q.value, std::move(g)};
  };
  return prob;
}

double total_objective(double mean_scale_value, Eigen::Index n) { return -mean_scale_value * static_cast<double>(n); }

}  // namespace riemmix
