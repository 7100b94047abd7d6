#pragma once

#include "riemmix/data.hpp"
#include "riemmix/em.hpp"
#include "riemmix/objective.hpp"
#include "riemmix/optimizers.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace riemmix {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kTraceHeader = "evals,objective,grad_norm,wall_ms";

using Json = nlohmann::ordered_json;

/// Flat run configuration. JSON keys are the kebab-case field names.
struct RunConfig {
  // data source: exactly one of data-path / gen-n
  std::string data_path;
  bool csv_header = false;
  std::string csv_delimiter = ",";
  std::optional<long> gen_n;
  long gen_k = 2;
  long gen_d = 2;
  double gen_separation = 5.0;

  long k = 1;
  std::string solver = "lbfgs";
  std::vector<std::string> solvers = {"lbfgs", "cg", "sgd", "em"};

  // penalty: derived | raw | none
  std::string penalty = "derived";
  double kappa = 2.0;
  double nu = -1.0;  ///< negative means d + 1
  double beta = 1.0;
  double zeta = 1.0;
  double lambda_scale = 0.01;
  double raw_rho = 0.0;
  double raw_kappa = 0.0;
  double raw_alpha = 0.0;
  double raw_beta = 0.0;

  int max_iterations = 1000;
  double grad_tol = 1e-8;
  double obj_tol = 1e-6;
  double max_evals = 0.0;  ///< 0 means unlimited
  int memory = 10;
  std::string retraction;  ///< empty: exp for batch solvers, euclidean for sgd

  int max_epochs = 5;
  long batch_size = 0;  ///< 0 means d
  std::string schedule = "exponential";  ///< exponential | inv-sqrt | lipschitz
  double step_start = 1.0;
  double step_end = 1e-3;
  double step_c = 1.0;
  double lipschitz = 0.0;
  double sigma = 0.0;
  long horizon = 0;
  bool with_replacement = false;
  int records_per_epoch = 10;

  int init_candidates = 30;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool record_wall_time = false;
};

/// Throws ArgumentError on unknown keys, wrong types, or invalid values.
RunConfig config_from_json(const Json& j);
Json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
/// Throws ArgumentError listing the valid choices.
void validate_config(const RunConfig& c);

inline const std::vector<std::string>& valid_solvers() {
  static const std::vector<std::string> names = {"lbfgs", "cg", "sgd", "em"};
  return names;
}

/// Loads or generates the data set named by the configuration.
Dataset load_dataset(const RunConfig& c);
PenaltyConfig make_penalty(const RunConfig& c, const Matrix& x);

/// Result of one solver run in a common form. Trace objectives are on the
/// minimization per-sample scale (-F/n).
struct SolverRun {
  std::string solver;
  MixtureEstimate estimate;
  double objective = 0.0;  ///< F, penalized log-likelihood
  ConvergenceTrace trace;
  std::string termination;
  int iterations = 0;
  double evals = 0.0;
  double elapsed_ms = 0.0;
  bool degraded = false;
};

SolverRun run_solver(const std::string& solver, const Matrix& x, const PenaltyConfig& pen, const MixtureEstimate& init,
                     const RunConfig& c);

struct ComparisonRun {
  std::vector<SolverRun> runs;
  std::vector<std::pair<std::string, std::string>> failures;  ///< solver, message
  double best = 0.0;  ///< lowest per-sample minimization objective over all runs
};

/// Runs every solver from the same initialization and penalty.
/// `fail_solver` names a solver to abort deliberately (test hook).
ComparisonRun run_comparison(const Matrix& x, const PenaltyConfig& pen, const MixtureEstimate& init,
                             const RunConfig& c, const std::string& fail_solver = {});

/// Best-so-far gap per trace record, on the per-sample scale.
std::vector<double> gap_curve(const ConvergenceTrace& trace, double best);

/// Trace CSV with the objective column negated (maximization scale).
std::string trace_csv(const ConvergenceTrace& trace);
Json estimate_to_json(const MixtureEstimate& est);
MixtureEstimate estimate_from_json(const Json& j);

/// temp file + rename
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct CommandHooks {
  std::string fail_solver;
  bool perturb_gradient = false;
};

/// Exit codes: 0 success, 1 selftest failure, 2 configuration or I/O error,
/// 3 numeric failure, 4 a compared solver failed.
int cmd_fit(const RunConfig& c, std::ostream& log);
int cmd_compare(const RunConfig& c, std::ostream& log, const CommandHooks& hooks = {});
int cmd_gen(const RunConfig& c, std::ostream& log);
int cmd_selftest(std::ostream& log, const CommandHooks& hooks = {});

struct SelftestGroup {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<SelftestGroup> run_selftest(bool perturb_gradient);

}  // namespace riemmix
