#include "riemmix/harness.hpp"

#include "riemmix/errors.hpp"
#include "riemmix/problems.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <system_error>

namespace riemmix {

// ---------------------------------------------------------------- config

namespace {

template <class T>
void read_key(const Json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(std::string("config key '") + key + "' has the wrong type");
  }
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "data-path", "csv-header", "csv-delimiter", "gen-n", "gen-k", "gen-d", "gen-separation", "k", "solver",
      "solvers", "penalty", "kappa", "nu", "beta", "zeta", "lambda-scale", "raw-rho", "raw-kappa", "raw-alpha",
      "raw-beta", "max-iterations", "grad-tol", "obj-tol", "max-evals", "memory", "retraction", "max-epochs",
      "batch-size", "schedule", "step-start", "step-end", "step-c", "lipschitz", "sigma", "horizon",
      "with-replacement", "records-per-epoch", "init-candidates", "seed", "out", "record-wall-time"};
  return keys;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

void check_choice(const std::string& what, const std::string& value, const std::vector<std::string>& valid) {
  if (std::find(valid.begin(), valid.end(), value) == valid.end()) {
    throw ArgumentError("unknown " + what + " '" + value + "' (valid: " + join(valid) + ")");
  }
}

}  // namespace

RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  const auto& keys = known_keys();
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ArgumentError("unknown config key '" + key + "'");
  }
  RunConfig c;
  read_key(j, "data-path", c.data_path);
  read_key(j, "csv-header", c.csv_header);
  read_key(j, "csv-delimiter", c.csv_delimiter);
  if (j.contains("gen-n")) {
    long n = 0;
    read_key(j, "gen-n", n);
    c.gen_n = n;
  }
  read_key(j, "gen-k", c.gen_k);
  read_key(j, "gen-d", c.gen_d);
  read_key(j, "gen-separation", c.gen_separation);
  read_key(j, "k", c.k);
  read_key(j, "solver", c.solver);
  read_key(j, "solvers", c.solvers);
  read_key(j, "penalty", c.penalty);
  read_key(j, "kappa", c.kappa);
  read_key(j, "nu", c.nu);
  read_key(j, "beta", c.beta);
  read_key(j, "zeta", c.zeta);
  read_key(j, "lambda-scale", c.lambda_scale);
  read_key(j, "raw-rho", c.raw_rho);
  read_key(j, "raw-kappa", c.raw_kappa);
  read_key(j, "raw-alpha", c.raw_alpha);
  read_key(j, "raw-beta", c.raw_beta);
  read_key(j, "max-iterations", c.max_iterations);
  read_key(j, "grad-tol", c.grad_tol);
  read_key(j, "obj-tol", c.obj_tol);
  read_key(j, "max-evals", c.max_evals);
  read_key(j, "memory", c.memory);
  read_key(j, "retraction", c.retraction);
  read_key(j, "max-epochs", c.max_epochs);
  read_key(j, "batch-size", c.batch_size);
  read_key(j, "schedule", c.schedule);
  read_key(j, "step-start", c.step_start);
  read_key(j, "step-end", c.step_end);
  read_key(j, "step-c", c.step_c);
  read_key(j, "lipschitz", c.lipschitz);
  read_key(j, "sigma", c.sigma);
  read_key(j, "horizon", c.horizon);
  read_key(j, "with-replacement", c.with_replacement);
  read_key(j, "records-per-epoch", c.records_per_epoch);
  read_key(j, "init-candidates", c.init_candidates);
  read_key(j, "seed", c.seed);
  read_key(j, "out", c.out);
  read_key(j, "record-wall-time", c.record_wall_time);
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json j;
  if (!c.data_path.empty()) j["data-path"] = c.data_path;
  j["csv-header"] = c.csv_header;
  j["csv-delimiter"] = c.csv_delimiter;
  if (c.gen_n) j["gen-n"] = *c.gen_n;
  j["gen-k"] = c.gen_k;
  j["gen-d"] = c.gen_d;
  j["gen-separation"] = c.gen_separation;
  j["k"] = c.k;
  j["solver"] = c.solver;
  j["solvers"] = c.solvers;
  j["penalty"] = c.penalty;
  j["kappa"] = c.kappa;
  j["nu"] = c.nu;
  j["beta"] = c.beta;
  j["zeta"] = c.zeta;
  j["lambda-scale"] = c.lambda_scale;
  j["raw-rho"] = c.raw_rho;
  j["raw-kappa"] = c.raw_kappa;
  j["raw-alpha"] = c.raw_alpha;
  j["raw-beta"] = c.raw_beta;
  j["max-iterations"] = c.max_iterations;
  j["grad-tol"] = c.grad_tol;
  j["obj-tol"] = c.obj_tol;
  j["max-evals"] = c.max_evals;
  j["memory"] = c.memory;
  j["retraction"] = c.retraction;
  j["max-epochs"] = c.max_epochs;
  j["batch-size"] = c.batch_size;
  j["schedule"] = c.schedule;
  j["step-start"] = c.step_start;
  j["step-end"] = c.step_end;
  j["step-c"] = c.step_c;
  j["lipschitz"] = c.lipschitz;
  j["sigma"] = c.sigma;
  j["horizon"] = c.horizon;
  j["with-replacement"] = c.with_replacement;
  j["records-per-epoch"] = c.records_per_epoch;
  j["init-candidates"] = c.init_candidates;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["record-wall-time"] = c.record_wall_time;
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ArgumentError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void validate_config(const RunConfig& c) {
  check_choice("solver", c.solver, valid_solvers());
  for (const auto& s : c.solvers) check_choice("solver", s, valid_solvers());
  check_choice("penalty mode", c.penalty, {"derived", "raw", "none"});
  check_choice("schedule", c.schedule, {"exponential", "inv-sqrt", "lipschitz"});
  if (!c.retraction.empty()) check_choice("retraction", c.retraction, {"exp", "euclidean"});
  if (c.k < 1) throw ArgumentError("k must be at least 1");
  if (c.csv_delimiter.size() != 1) throw ArgumentError("csv-delimiter must be a single character");
  if (c.batch_size < 0) throw ArgumentError("batch-size must be non-negative");
  if (c.max_epochs < 0) throw ArgumentError("max-epochs must be non-negative");
  if (c.max_iterations < 0) throw ArgumentError("max-iterations must be non-negative");
  if (c.init_candidates < 1) throw ArgumentError("init-candidates must be at least 1");
  if (c.memory < 0) throw ArgumentError("memory must be non-negative");
  if (c.gen_n && *c.gen_n < 0) throw ArgumentError("gen-n must be non-negative");
}

// ---------------------------------------------------------------- data and penalty

namespace {

TruthSpec truth_spec(const RunConfig& c) {
  TruthSpec s;
  if (c.gen_k < 1 || c.gen_d < 1) throw ArgumentError("gen-k and gen-d must be at least 1");
  s.K = static_cast<std::size_t>(c.gen_k);
  s.d = c.gen_d;
  s.separation = c.gen_separation;
  return s;
}

Dataset generate(const RunConfig& c) {
  const MixtureEstimate truth = random_truth(truth_spec(c), c.seed);
  return sample_gmm(truth, *c.gen_n, c.seed);
}

}  // namespace

Dataset load_dataset(const RunConfig& c) {
  const bool from_file = !c.data_path.empty();
  if (from_file == c.gen_n.has_value()) throw ArgumentError("set exactly one of data-path and gen-n");
  if (from_file) return load_csv(c.data_path, {c.csv_delimiter.front(), c.csv_header});
  return generate(c);
}

PenaltyConfig make_penalty(const RunConfig& c, const Matrix& x) {
  if (c.penalty == "none") return PenaltyConfig::none(x.cols());
  if (c.penalty == "raw") {
    if (x.rows() < 2) throw ArgumentError("raw penalty needs at least two samples");
    const Vector mean = x.colwise().mean().transpose();
    return raw_penalty(c.raw_rho, c.raw_kappa, c.raw_alpha, c.raw_beta, c.lambda_scale * sample_covariance(x), mean,
                       c.zeta);
  }
  PenaltyDefaults d;
  d.kappa = c.kappa;
  d.beta = c.beta;
  d.nu = c.nu;
  d.zeta = c.zeta;
  d.lambda_scale = c.lambda_scale;
  return penalty_from_data(x, d);
}

// ---------------------------------------------------------------- solvers

SolverRun run_solver(const std::string& solver, const Matrix& x, const PenaltyConfig& pen, const MixtureEstimate& init,
                     const RunConfig& c) {
  check_choice("solver", solver, valid_solvers());
  const auto start = std::chrono::steady_clock::now();
  SolverRun run;
  run.solver = solver;

  if (solver == "em") {
    EmOptions o;
    o.max_iterations = c.max_iterations;
    o.obj_tol = c.obj_tol;
    if (c.max_evals > 0.0) o.max_evals = c.max_evals;
    o.record_wall_time = c.record_wall_time;
    EmResult r = em_fit(x, init.num_components(), pen, init, o);
    run.estimate = std::move(r.estimate);
    run.objective = r.objective;
    run.trace = std::move(r.trace);
    run.termination = std::string(to_string(r.termination));
    run.iterations = r.iterations;
    run.evals = r.evals;
  } else {
    const SolverProblem problem = make_gmm_problem(std::make_shared<const AugmentedData>(augment(x)), pen);
    const GmmParams x0 = embed_mixture(init);
    if (solver == "sgd") {
      SgdSchedule sched;
      if (c.schedule == "exponential") {
        sched = SgdSchedule::exponential_decay(c.step_start, c.step_end);
      } else if (c.schedule == "inv-sqrt") {
        sched = SgdSchedule::inv_sqrt_constant(c.step_c, c.horizon);
      } else {
        sched = SgdSchedule::lipschitz_capped(c.lipschitz, c.sigma, c.step_c, c.horizon);
      }
      SgdOptions o;
      o.max_epochs = c.max_epochs;
      o.batch_size = static_cast<std::size_t>(c.batch_size > 0 ? c.batch_size : x.cols());
      o.with_replacement = c.with_replacement;
      o.seed = derive_seed(c.seed, 2);
      o.retraction = c.retraction.empty() ? RetractionKind::euclidean : parse_retraction(c.retraction);
      o.records_per_epoch = c.records_per_epoch;
      o.record_wall_time = c.record_wall_time;
      SgdResult r = sgd(problem, x0, sched, o);
      run.estimate = recover_mixture(r.x);
      run.objective = total_objective(r.trace.back().objective, x.rows());
      run.trace = std::move(r.trace);
      run.termination = std::string(to_string(Termination::epoch_budget));
      run.iterations = static_cast<int>(r.updates);
      run.evals = r.evals;
    } else {
      SolverOptions o;
      o.max_iterations = c.max_iterations;
      o.grad_tol = c.grad_tol;
      o.obj_tol = c.obj_tol;
      if (c.max_evals > 0.0) o.max_evals = c.max_evals;
      o.memory = c.memory;
      o.retraction = c.retraction.empty() ? RetractionKind::exp : parse_retraction(c.retraction);
      o.record_wall_time = c.record_wall_time;
      SolverResult r = solver == "lbfgs" ? lbfgs(problem, x0, o) : cg(problem, x0, o);
      run.estimate = recover_mixture(r.x);
      run.objective = total_objective(r.value, x.rows());
      run.trace = std::move(r.trace);
      run.termination = std::string(to_string(r.termination));
      run.iterations = r.iterations;
      run.evals = r.evals;
      run.degraded = r.degraded();
    }
  }
  run.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return run;
}

ComparisonRun run_comparison(const Matrix& x, const PenaltyConfig& pen, const MixtureEstimate& init,
                             const RunConfig& c, const std::string& fail_solver) {
  ComparisonRun cmp;
  for (const auto& name : c.solvers) {
    try {
      if (name == fail_solver) throw NumericError("deliberate failure requested for solver " + name);
      cmp.runs.push_back(run_solver(name, x, pen, init, c));
    } catch (const std::exception& e) {
      cmp.failures.emplace_back(name, e.what());
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : cmp.runs) {
    for (const auto& rec : r.trace.records) best = std::min(best, rec.objective);
  }
  cmp.best = best;
  return cmp;
}

std::vector<double> gap_curve(const ConvergenceTrace& trace, double best) {
  std::vector<double> gaps;
  double so_far = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records) {
    so_far = std::min(so_far, r.objective);
    gaps.push_back(std::max(0.0, so_far - best));
  }
  return gaps;
}

// ---------------------------------------------------------------- files

std::string trace_csv(const ConvergenceTrace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : trace.records) {
    out += format_double(r.evals) + ',' + format_double(-r.objective) + ',' + format_double(r.grad_norm) + ',' +
           format_double(r.wall_ms) + '\n';
  }
  return out;
}

Json estimate_to_json(const MixtureEstimate& est) {
  Json j;
  j["weights"] = std::vector<double>(est.weights.data(), est.weights.data() + est.weights.size());
  Json means = Json::array();
  for (const auto& m : est.means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  j["means"] = means;
  Json covs = Json::array();
  for (const auto& cov : est.covariances) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < cov.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(cov.cols()));
      for (Eigen::Index q = 0; q < cov.cols(); ++q) row[static_cast<std::size_t>(q)] = cov(r, q);
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  j["covariances"] = covs;
  return j;
}

MixtureEstimate estimate_from_json(const Json& j) {
  try {
    MixtureEstimate est;
    const auto w = j.at("weights").get<std::vector<double>>();
    est.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    for (const auto& m : j.at("means")) {
      const auto v = m.get<std::vector<double>>();
      est.means.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& cov : j.at("covariances")) {
      const auto rows = cov.get<std::vector<std::vector<double>>>();
      Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size()) throw ArgumentError("covariance is not square");
        for (std::size_t q = 0; q < rows.size(); ++q) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = rows[r][q];
      }
      est.covariances.push_back(m);
    }
    return est;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed mixture estimate: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ArgumentError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------- commands

namespace {

Json run_summary(const SolverRun& r, Eigen::Index n) {
  Json j;
  j["solver"] = r.solver;
  j["termination"] = r.termination;
  j["degraded"] = r.degraded;
  j["iterations"] = r.iterations;
  j["evals"] = r.evals;
  j["objective"] = r.objective;
  j["objective-per-sample"] = r.objective / static_cast<double>(n);
  j["elapsed-ms"] = r.elapsed_ms;
  j["estimate"] = estimate_to_json(r.estimate);
  return j;
}

Json report_header(const RunConfig& c, const std::string& command, const Dataset& ds) {
  Json j;
  j["version"] = std::string(kVersion);
  j["rng"] = std::string(kRngName);
  j["command"] = command;
  j["n"] = ds.n();
  j["d"] = ds.d();
  j["config"] = config_to_json(c);
  return j;
}

// Runs `body`, mapping exceptions onto exit codes.
int guarded(std::ostream& log, const std::string& command, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    log << command << ": numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    log << command << ": error: " << e.what() << '\n';
    return 2;
  }
}

struct Prepared {
  Dataset data;
  PenaltyConfig pen;
  MixtureEstimate init;
};

Prepared prepare(const RunConfig& c) {
  validate_config(c);
  Prepared p;
  p.data = load_dataset(c);
  if (p.data.n() <= c.k) throw ArgumentError("need more samples than components");
  p.pen = make_penalty(c, p.data.rows);
  p.init = kmeanspp_init(p.data.rows, static_cast<std::size_t>(c.k), p.pen, derive_seed(c.seed, 1), c.init_candidates);
  return p;
}

}  // namespace

int cmd_fit(const RunConfig& c, std::ostream& log) {
  return guarded(log, "fit", [&] {
    const Prepared p = prepare(c);
    const SolverRun run = run_solver(c.solver, p.data.rows, p.pen, p.init, c);
    const std::filesystem::path out(c.out);
    write_file_atomic(out / "trace.csv", trace_csv(run.trace));
    Json report = report_header(c, "fit", p.data);
    report["run"] = run_summary(run, p.data.n());
    write_file_atomic(out / "report.json", report.dump(2) + "\n");
    log << "fit: " << run.solver << " stopped on " << run.termination << " after " << run.iterations
        << " iterations, " << format_double(run.evals) << " evaluations, objective "
        << format_double(run.objective) << '\n';
    return 0;
  });
}

int cmd_compare(const RunConfig& c, std::ostream& log, const CommandHooks& hooks) {
  return guarded(log, "compare", [&] {
    if (c.solvers.size() < 2) throw ArgumentError("compare needs at least two solvers");
    const Prepared p = prepare(c);
    const ComparisonRun cmp = run_comparison(p.data.rows, p.pen, p.init, c, hooks.fail_solver);
    const std::filesystem::path out(c.out);
    std::string combined = "solver,evals,gap\n";
    Json report = report_header(c, "compare", p.data);
    report["runs"] = Json::array();
    for (const auto& r : cmp.runs) {
      write_file_atomic(out / ("trace-" + r.solver + ".csv"), trace_csv(r.trace));
      const std::vector<double> gaps = gap_curve(r.trace, cmp.best);
      for (std::size_t i = 0; i < gaps.size(); ++i) {
        combined += r.solver + ',' + format_double(r.trace.records[i].evals) + ',' + format_double(gaps[i]) + '\n';
      }
      report["runs"].push_back(run_summary(r, p.data.n()));
      log << "compare: " << r.solver << " stopped on " << r.termination << " after " << format_double(r.evals)
          << " evaluations, objective " << format_double(r.objective) << '\n';
    }
    Json failed = Json::array();
    for (const auto& [name, msg] : cmp.failures) {
      failed.push_back({{"solver", name}, {"error", msg}});
      log << "compare: " << name << " FAILED: " << msg << '\n';
    }
    report["failures"] = failed;
    report["best-objective-per-sample"] = cmp.runs.empty() ? 0.0 : -cmp.best;
    write_file_atomic(out / "compare.csv", combined);
    write_file_atomic(out / "compare.json", report.dump(2) + "\n");
    return cmp.failures.empty() ? 0 : 4;
  });
}

int cmd_gen(const RunConfig& c, std::ostream& log) {
  return guarded(log, "gen", [&] {
    validate_config(c);
    if (!c.gen_n) throw ArgumentError("gen needs gen-n");
    const Dataset ds = generate(c);
    const std::filesystem::path out(c.out);
    write_file_atomic(out / "data.csv", to_csv(ds.rows, c.csv_delimiter.front()));
    Json side;
    side["version"] = std::string(kVersion);
    side["rng"] = std::string(kRngName);
    side["seed"] = c.seed;
    side["n"] = ds.n();
    side["k"] = c.gen_k;
    side["d"] = c.gen_d;
    side["separation"] = c.gen_separation;
    side["truth"] = estimate_to_json(*ds.truth);
    write_file_atomic(out / "truth.json", side.dump(2) + "\n");
    log << "gen: wrote " << ds.n() << " rows to " << (out / "data.csv").string() << '\n';
    return 0;
  });
}

int cmd_selftest(std::ostream& log, const CommandHooks& hooks) {
  const auto groups = run_selftest(hooks.perturb_gradient);
  bool ok = true;
  for (const auto& g : groups) {
    log << "selftest: " << g.name << ' ' << (g.passed ? "pass" : "FAIL") << " (" << g.detail << ")\n";
    ok = ok && g.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace riemmix
