#pragma once

#include "riemmix/linesearch.hpp"
#include "riemmix/objective.hpp"
#include "riemmix/product.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace riemmix {

struct ValueAndGrad {
  double value = 0.0;
  GmmTangent grad;
};

/// Tangent map from one point's tangent space to another's.
using TangentMap = std::function<GmmTangent(const GmmTangent&)>;

/// Objective seen by the solvers, always minimized. Gradients are Riemannian
/// in the product metric. Geometry defaults to the product-manifold operations.
struct SolverProblem {
  std::function<double(const GmmParams&)> value;
  std::function<ValueAndGrad(const GmmParams&)> value_and_grad;
  /// Mean of the per-sample gradients over the batch; averaging it over all
  /// singleton batches gives the full gradient.
  std::function<GmmTangent(const GmmParams&, std::span<const Eigen::Index>)> stochastic_grad;
  Eigen::Index n_samples = 0;

  std::function<GmmParams(const GmmParams&, const GmmTangent&, RetractionKind)> retract = product_retract;
  std::function<TangentMap(const GmmParams&, const GmmParams&, TransportKind)> transport =
      [](const GmmParams& from, const GmmParams& to, TransportKind kind) -> TangentMap {
    auto op = std::make_shared<ProductTransport>(from, to, kind);
    return [op](const GmmTangent& xi) { return (*op)(xi); };
  };
  std::function<double(const GmmParams&, const GmmTangent&, const GmmTangent&)> metric = product_metric;
};

struct TraceRecord {
  double evals = 0.0;  ///< cumulative function + gradient evaluations
  double objective = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;

  bool empty() const noexcept { return records.empty(); }
  const TraceRecord& back() const { return records.back(); }
  /// Lowest objective recorded at or before `evals`; nullopt if none yet.
  std::optional<double> best_until(double evals) const;
};

enum class Termination {
  objective_change,  ///< successive objective difference below tolerance
  gradient_norm,
  iteration_limit,
  evaluation_limit,
  epoch_budget,
  line_search_failure  ///< degraded: best iterate returned
};
std::string_view to_string(Termination t);

struct SolverOptions {
  int max_iterations = 1000;
  double grad_tol = 1e-8;
  /// Stop when |f_k - f_{k-1}| falls below this; non-positive disables.
  double obj_tol = 1e-6;
  double max_evals = std::numeric_limits<double>::infinity();
  RetractionKind retraction = RetractionKind::exp;
  std::optional<TransportKind> transport;
  int memory = 10;
  WolfeConfig wolfe;
  bool record_wall_time = false;

  TransportKind transport_kind() const { return transport.value_or(default_transport(retraction)); }
};

struct SolverResult {
  GmmParams x;
  double value = 0.0;
  double grad_norm = 0.0;
  ConvergenceTrace trace;
  Termination termination = Termination::iteration_limit;
  int iterations = 0;
  double evals = 0.0;

  bool degraded() const noexcept { return termination == Termination::line_search_failure; }
};

SolverResult lbfgs(const SolverProblem& problem, const GmmParams& x0, const SolverOptions& opts = {});
SolverResult cg(const SolverProblem& problem, const GmmParams& x0, const SolverOptions& opts = {});

/// Two-loop recursion over transported curvature pairs, returning -H grad.
struct CurvaturePair {
  GmmTangent s;
  GmmTangent y;
  double sy = 0.0;
};
GmmTangent lbfgs_direction(const SolverProblem& problem, const GmmParams& x, const GmmTangent& grad,
                           std::span<const CurvaturePair> memory);
/// ⟨s,y⟩ > 1e-10 ‖s‖‖y‖
bool cautious_admit(double sy, double s_norm, double y_norm);

struct SgdSchedule {
  enum class Kind { exponential_decay, inv_sqrt_constant, lipschitz_capped };
  Kind kind = Kind::exponential_decay;
  double start = 1.0;
  double end = 1e-3;
  /// Horizon T for the 1/√T schedules; 0 means the number of updates.
  long horizon = 0;
  double c = 1.0;
  double lipschitz = 0.0;
  double sigma = 0.0;

  static SgdSchedule exponential_decay(double start, double end);
  static SgdSchedule inv_sqrt_constant(double c, long horizon = 0);
  static SgdSchedule lipschitz_capped(double lipschitz, double sigma, double c, long horizon = 0);

  /// Throws ArgumentError on invalid parameters.
  void validate() const;
};

/// Geometric interpolation start → end for exponential decay; c/√T and
/// min(1/L, c/(σ√T)) for the other two.
std::vector<double> step_sequence(const SgdSchedule& schedule, std::size_t updates);

struct SgdOptions {
  int max_epochs = 5;
  std::size_t batch_size = 1;
  bool with_replacement = false;
  std::uint64_t seed = 0;
  RetractionKind retraction = RetractionKind::euclidean;
  /// Full-objective snapshots per epoch; 0 records after every update.
  /// Snapshots are monitoring only and do not count as evaluations.
  int records_per_epoch = 10;
  bool keep_iterates = false;
  bool record_wall_time = false;
  int max_halvings = 30;
  /// Called after every update with the new iterate and the update index.
  std::function<void(const GmmParams&, std::size_t)> on_update;
};

struct SgdResult {
  GmmParams x;          ///< final iterate
  GmmParams best;       ///< lowest recorded objective
  double best_value = 0.0;
  ConvergenceTrace trace;
  std::vector<double> steps;
  std::vector<GmmParams> iterates;  ///< x_0 .. x_{U-1} when keep_iterates
  std::size_t updates = 0;
  std::size_t halvings = 0;
  double evals = 0.0;
};

SgdResult sgd(const SolverProblem& problem, const GmmParams& x0, const SgdSchedule& schedule, const SgdOptions& opts);

/// p_t = (2η_t - Lη_t²) / Z. Throws ArgumentError if any mass is non-positive.
std::vector<double> randomized_output_probabilities(std::span<const double> steps, double lipschitz);
std::size_t sample_randomized_index(std::span<const double> steps, double lipschitz, std::mt19937_64& rng);
const GmmParams& sgd_randomized_output(std::span<const GmmParams> iterates, std::span<const double> steps,
                                       double lipschitz, std::mt19937_64& rng);

struct DataStats {
  Eigen::Index n = 0;
  double max_sq_norm = 0.0;  ///< max_i ‖y_i‖² over the augmented rows
};
DataStats data_stats(const AugmentedData& data);

struct ComponentBounds {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool lower_ok = false;
  bool upper_ok = false;
};

struct BoundReport {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<ComponentBounds> components;

  bool ok() const;
};

/// Eigenvalue window λ_min(Ψ)β/(n+ρ) ≤ λ(S_j) ≤ max_{w∈{0,1}} (w n A + β‖Ψ‖)/(wn+ρ),
/// with A = max_i ‖y_i‖².
BoundReport iterate_bound_monitor(const GmmParams& params, const PenaltyConfig& cfg, const DataStats& stats);

}  // namespace riemmix
