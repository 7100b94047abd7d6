#include "riemmix/optimizers.hpp"

#include "riemmix/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

namespace riemmix {

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

double tangent_norm(const SolverProblem& p, const GmmParams& x, const GmmTangent& v) {
  return std::sqrt(std::max(0.0, p.metric(x, v, v)));
}

void check_problem(const SolverProblem& p) {
  if (!p.value_and_grad || !p.retract || !p.transport || !p.metric) {
    throw ArgumentError("solver problem is missing value_and_grad or geometry");
  }
}

void check_options(const SolverOptions& o) {
  if (o.max_iterations < 0) throw ArgumentError("max_iterations must be non-negative");
  if (o.memory < 0) throw ArgumentError("memory must be non-negative");
  if (!(o.grad_tol >= 0.0)) throw ArgumentError("grad_tol must be non-negative");
}

ValueAndGrad checked_eval(const SolverProblem& p, const GmmParams& x) {
  ValueAndGrad vg = p.value_and_grad(x);
  if (!std::isfinite(vg.value)) throw NumericError("objective is not finite at the starting point");
  return vg;
}

struct Accepted {
  GmmParams x;
  ValueAndGrad vg;
  TangentMap transport;
  double alpha = 0.0;
  bool wolfe = true;
};

struct Probe {
  double alpha;
  GmmParams x;
  ValueAndGrad vg;
  TangentMap transport;
};

// Strong Wolfe search along R_x(α d). Each probe evaluates value and gradient
// and is charged two evaluations.
std::optional<Accepted> search_along(const SolverProblem& p, const SolverOptions& opts, const GmmParams& x, double f,
                                     const GmmTangent& d, double slope, double alpha0, double& evals) {
  std::vector<Probe> probes;
  const RetractionKind rkind = opts.retraction;
  const TransportKind tkind = opts.transport_kind();
  ScalarProbe probe{f, slope, [&](double alpha) -> ProbeSample {
                      const double inf = std::numeric_limits<double>::infinity();
                      try {
                        GmmParams xa = p.retract(x, alpha * d, rkind);
                        ValueAndGrad vg = p.value_and_grad(xa);
                        if (!std::isfinite(vg.value)) return {inf, 0.0};
                        TangentMap T = p.transport(x, xa, tkind);
                        const double dphi = p.metric(xa, vg.grad, T(d));
                        probes.push_back(Probe{alpha, std::move(xa), std::move(vg), std::move(T)});
                        return {probes.back().vg.value, dphi};
                      } catch (const NumericError&) {
                        return {inf, 0.0};
                      } catch (const ArgumentError&) {
                        return {inf, 0.0};
                      }
                    }};
  WolfeConfig cfg = opts.wolfe;
  cfg.alpha_init = alpha0;
  try {
    const LineSearchResult ls = wolfe_search(probe, cfg);
    evals += 2.0 * ls.evals;
    for (auto it = probes.rbegin(); it != probes.rend(); ++it) {
      if (it->alpha == ls.alpha) return Accepted{std::move(it->x), std::move(it->vg), std::move(it->transport), ls.alpha,
                        ls.status == LineSearchStatus::wolfe};
    }
    throw NumericError("line search accepted a step that was never evaluated");
  } catch (const LineSearchFailure& e) {
    evals += 2.0 * e.evals();
    return std::nullopt;
  }
}

struct Loop {
  const SolverProblem& p;
  const SolverOptions& opts;
  Stopwatch clock;
  SolverResult res;
  GmmTangent g;
  double gn = 0.0;

  Loop(const SolverProblem& problem, const GmmParams& x0, const SolverOptions& o)
      : p(problem), opts(o), clock(o.record_wall_time) {
    check_problem(p);
    check_options(opts);
    ValueAndGrad vg = checked_eval(p, x0);
    res.x = x0;
    res.value = vg.value;
    g = std::move(vg.grad);
    gn = tangent_norm(p, res.x, g);
    res.evals = 2.0;
    record();
  }

  void record() { res.trace.records.push_back({res.evals, res.value, gn, clock.ms()}); }

  // Checks the stopping rules that apply before an iteration starts.
  bool should_stop() {
    if (gn < opts.grad_tol) {
      res.termination = Termination::gradient_norm;
      return true;
    }
    if (res.iterations >= opts.max_iterations) {
      res.termination = Termination::iteration_limit;
      return true;
    }
    if (res.evals >= opts.max_evals) {
      res.termination = Termination::evaluation_limit;
      return true;
    }
    return false;
  }

  // Moves to the accepted point; true when the objective-change rule fires.
  bool advance(Accepted&& step) {
    const double f_old = res.value;
    res.x = std::move(step.x);
    res.value = step.vg.value;
    g = std::move(step.vg.grad);
    gn = tangent_norm(p, res.x, g);
    ++res.iterations;
    record();
    if (opts.obj_tol > 0.0 && std::abs(f_old - res.value) < opts.obj_tol) {
      res.termination = Termination::objective_change;
      return true;
    }
    return false;
  }

  SolverResult finish() {
    res.grad_norm = gn;
    return std::move(res);
  }
};

}  // namespace

std::optional<double> ConvergenceTrace::best_until(double evals) const {
  std::optional<double> best;
  for (const auto& r : records) {
    if (r.evals > evals) break;
    if (!best || r.objective < *best) best = r.objective;
  }
  return best;
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::objective_change: return "objective-change";
    case Termination::gradient_norm: return "gradient-norm";
    case Termination::iteration_limit: return "iteration-limit";
    case Termination::evaluation_limit: return "evaluation-limit";
    case Termination::epoch_budget: return "epoch-budget";
    case Termination::line_search_failure: return "line-search-failure";
  }
  return "unknown";
}

bool cautious_admit(double sy, double s_norm, double y_norm) { return sy > 1e-10 * s_norm * y_norm; }

GmmTangent lbfgs_direction(const SolverProblem& problem, const GmmParams& x, const GmmTangent& grad,
                           std::span<const CurvaturePair> memory) {
  GmmTangent q = grad;
  std::vector<double> a(memory.size());
  for (std::size_t i = memory.size(); i-- > 0;) {
    a[i] = problem.metric(x, memory[i].s, q) / memory[i].sy;
    q -= a[i] * memory[i].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.sy / problem.metric(x, last.y, last.y);
  }
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const double b = problem.metric(x, memory[i].y, q) / memory[i].sy;
    q += (a[i] - b) * memory[i].s;
  }
  q *= -1.0;
  return q;
}

SolverResult lbfgs(const SolverProblem& problem, const GmmParams& x0, const SolverOptions& opts) {
  Loop loop(problem, x0, opts);
  std::deque<CurvaturePair> memory;
  const std::size_t cap = static_cast<std::size_t>(opts.memory);

  while (!loop.should_stop()) {
    const GmmParams& x = loop.res.x;
    const std::vector<CurvaturePair> mem(memory.begin(), memory.end());
    GmmTangent d = lbfgs_direction(problem, x, loop.g, mem);
    double slope = problem.metric(x, loop.g, d);
    if (!(slope < 0.0) || !std::isfinite(slope)) {
      memory.clear();
      d = -loop.g;
      slope = -loop.gn * loop.gn;
    }
    const double first = std::min(1.0, 1.0 / loop.gn);
    auto step = search_along(problem, opts, x, loop.res.value, d, slope, memory.empty() ? first : 1.0,
                             loop.res.evals);
    if (!step && !memory.empty()) {
      memory.clear();
      d = -loop.g;
      slope = -loop.gn * loop.gn;
      step = search_along(problem, opts, x, loop.res.value, d, slope, first, loop.res.evals);
    }
    if (!step) {
      loop.res.termination = Termination::line_search_failure;
      break;
    }

    const TangentMap& T = step->transport;
    const GmmParams& xn = step->x;
    GmmTangent s = T(step->alpha * d);
    GmmTangent y = step->vg.grad - T(loop.g);
    std::deque<CurvaturePair> moved;
    for (auto& pair : memory) {
      CurvaturePair m{T(pair.s), T(pair.y), 0.0};
      m.sy = problem.metric(xn, m.s, m.y);
      if (cautious_admit(m.sy, tangent_norm(problem, xn, m.s), tangent_norm(problem, xn, m.y))) {
        moved.push_back(std::move(m));
      }
    }
    memory = std::move(moved);
    // A step without the curvature condition says little about the Hessian.
    if (!step->wolfe) memory.clear();
    const double sy = problem.metric(xn, s, y);
    if (cap > 0 && step->wolfe && cautious_admit(sy, tangent_norm(problem, xn, s), tangent_norm(problem, xn, y))) {
      memory.push_back({std::move(s), std::move(y), sy});
      while (memory.size() > cap) memory.pop_front();
    }
    if (loop.advance(std::move(*step))) break;
  }
  return loop.finish();
}

SolverResult cg(const SolverProblem& problem, const GmmParams& x0, const SolverOptions& opts) {
  Loop loop(problem, x0, opts);
  GmmTangent d = -loop.g;
  bool steepest = true;
  std::optional<double> f_prev;

  while (!loop.should_stop()) {
    const GmmParams& x = loop.res.x;
    double slope = problem.metric(x, loop.g, d);
    if (!(slope < 0.0) || !std::isfinite(slope)) {
      d = -loop.g;
      slope = -loop.gn * loop.gn;
      steepest = true;
    }
    const double first = std::min(1.0, 1.0 / loop.gn);
    const double alpha0 = f_prev ? initial_step(loop.res.value, f_prev, slope) : first;
    auto step = search_along(problem, opts, x, loop.res.value, d, slope, alpha0, loop.res.evals);
    if (!step && !steepest) {
      d = -loop.g;
      slope = -loop.gn * loop.gn;
      steepest = true;
      step = search_along(problem, opts, x, loop.res.value, d, slope, first, loop.res.evals);
    }
    if (!step) {
      loop.res.termination = Termination::line_search_failure;
      break;
    }

    const TangentMap& T = step->transport;
    const GmmParams& xn = step->x;
    const GmmTangent g_old = T(loop.g);
    const GmmTangent d_old = T(d);
    const double gg_old = loop.gn * loop.gn;
    const GmmTangent& g_new = step->vg.grad;
    const double beta = std::max(0.0, problem.metric(xn, g_new, g_new - g_old) / gg_old);
    d = beta * d_old - g_new;
    steepest = beta == 0.0;
    f_prev = loop.res.value;
    if (loop.advance(std::move(*step))) break;
  }
  return loop.finish();
}

SgdSchedule SgdSchedule::exponential_decay(double start, double end) {
  SgdSchedule s;
  s.kind = Kind::exponential_decay;
  s.start = start;
  s.end = end;
  return s;
}

SgdSchedule SgdSchedule::inv_sqrt_constant(double c, long horizon) {
  SgdSchedule s;
  s.kind = Kind::inv_sqrt_constant;
  s.c = c;
  s.horizon = horizon;
  return s;
}

SgdSchedule SgdSchedule::lipschitz_capped(double lipschitz, double sigma, double c, long horizon) {
  SgdSchedule s;
  s.kind = Kind::lipschitz_capped;
  s.lipschitz = lipschitz;
  s.sigma = sigma;
  s.c = c;
  s.horizon = horizon;
  return s;
}

void SgdSchedule::validate() const {
  if (horizon < 0) throw ArgumentError("schedule horizon must be non-negative");
  switch (kind) {
    case Kind::exponential_decay:
      if (!(end > 0.0 && start >= end) || !std::isfinite(start)) {
        throw ArgumentError("exponential decay needs start >= end > 0");
      }
      break;
    case Kind::inv_sqrt_constant:
      if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("inverse square root schedule needs c > 0");
      break;
    case Kind::lipschitz_capped:
      if (!(c > 0.0 && lipschitz > 0.0 && sigma > 0.0)) {
        throw ArgumentError("Lipschitz-capped schedule needs L, sigma and c positive");
      }
      break;
  }
}

std::vector<double> step_sequence(const SgdSchedule& schedule, std::size_t updates) {
  schedule.validate();
  std::vector<double> steps(updates);
  const double T = static_cast<double>(schedule.horizon > 0 ? static_cast<std::size_t>(schedule.horizon) : updates);
  switch (schedule.kind) {
    case SgdSchedule::Kind::exponential_decay: {
      const double ratio = std::log(schedule.end / schedule.start);
      for (std::size_t u = 0; u < updates; ++u) {
        const double frac = updates > 1 ? static_cast<double>(u) / static_cast<double>(updates - 1) : 0.0;
        steps[u] = schedule.start * std::exp(ratio * frac);
      }
      if (updates > 1) steps.back() = schedule.end;
      break;
    }
    case SgdSchedule::Kind::inv_sqrt_constant:
      std::fill(steps.begin(), steps.end(), schedule.c / std::sqrt(std::max(1.0, T)));
      break;
    case SgdSchedule::Kind::lipschitz_capped:
      std::fill(steps.begin(), steps.end(),
                std::min(1.0 / schedule.lipschitz, schedule.c / (schedule.sigma * std::sqrt(std::max(1.0, T)))));
      break;
  }
  return steps;
}

SgdResult sgd(const SolverProblem& problem, const GmmParams& x0, const SgdSchedule& schedule, const SgdOptions& opts) {
  check_problem(problem);
  if (!problem.stochastic_grad) throw ArgumentError("sgd: problem has no stochastic gradient");
  const Eigen::Index n = problem.n_samples;
  if (n < 1) throw ArgumentError("sgd: problem has no samples");
  if (opts.batch_size < 1) throw ArgumentError("sgd: batch size must be at least 1");
  if (opts.max_epochs < 0) throw ArgumentError("sgd: epoch budget must be non-negative");
  const std::size_t b = std::min<std::size_t>(opts.batch_size, static_cast<std::size_t>(n));
  const std::size_t per_epoch = static_cast<std::size_t>(n) / b;
  const std::size_t updates = per_epoch * static_cast<std::size_t>(opts.max_epochs);

  SgdResult res;
  res.steps = step_sequence(schedule, updates);
  res.x = x0;
  Stopwatch clock(opts.record_wall_time);
  std::mt19937_64 rng(opts.seed);

  auto snapshot = [&]() {
    const ValueAndGrad vg = problem.value_and_grad(res.x);
    const double gn = tangent_norm(problem, res.x, vg.grad);
    res.trace.records.push_back({res.evals, vg.value, gn, clock.ms()});
    if (res.trace.records.size() == 1 || vg.value < res.best_value) {
      res.best = res.x;
      res.best_value = vg.value;
    }
  };
  snapshot();

  const std::size_t every =
      opts.records_per_epoch <= 0 ? 1 : std::max<std::size_t>(1, per_epoch / static_cast<std::size_t>(opts.records_per_epoch));
  const double batch_cost = static_cast<double>(b) / static_cast<double>(n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> batch(b);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  if (opts.keep_iterates) res.iterates.reserve(updates);

  std::size_t u = 0;
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    if (!opts.with_replacement) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t k = 0; k < per_epoch; ++k, ++u) {
      if (opts.with_replacement) {
        for (auto& i : batch) i = pick(rng);
      } else {
        std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(k * b), b, batch.begin());
      }
      if (opts.keep_iterates) res.iterates.push_back(res.x);
      const GmmTangent g = problem.stochastic_grad(res.x, batch);
      res.evals = static_cast<double>(u + 1) * batch_cost;

      double eta = res.steps[u];
      int halvings = 0;
      for (;;) {
        try {
          res.x = problem.retract(res.x, -eta * g, opts.retraction);
          break;
        } catch (const NumericError& e) {
          if (halvings >= opts.max_halvings) {
            throw NumericError("sgd: retraction still failing after " + std::to_string(halvings) +
                               " step halvings at update " + std::to_string(u) + ": " + e.what());
          }
          eta *= 0.5;
          ++halvings;
        }
      }
      res.halvings += static_cast<std::size_t>(halvings);
      if (opts.on_update) opts.on_update(res.x, u);
      if ((k + 1) % every == 0 || u + 1 == updates) snapshot();
    }
  }
  res.updates = u;
  return res;
}

std::vector<double> randomized_output_probabilities(std::span<const double> steps, double lipschitz) {
  if (steps.empty()) throw ArgumentError("randomized output: no iterates");
  std::vector<double> p(steps.size());
  double z = 0.0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    p[t] = 2.0 * steps[t] - lipschitz * steps[t] * steps[t];
    if (!(p[t] > 0.0)) {
      throw ArgumentError("randomized output: non-positive mass 2η - Lη² at index " + std::to_string(t));
    }
    z += p[t];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::size_t sample_randomized_index(std::span<const double> steps, double lipschitz, std::mt19937_64& rng) {
  const std::vector<double> p = randomized_output_probabilities(steps, lipschitz);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return dist(rng);
}

const GmmParams& sgd_randomized_output(std::span<const GmmParams> iterates, std::span<const double> steps,
                                       double lipschitz, std::mt19937_64& rng) {
  if (iterates.size() != steps.size()) throw ArgumentError("randomized output: iterates and steps differ in length");
  return iterates[sample_randomized_index(steps, lipschitz, rng)];
}

DataStats data_stats(const AugmentedData& data) {
  DataStats s;
  s.n = data.size();
  if (!data.empty()) s.max_sq_norm = data.rows.rowwise().squaredNorm().maxCoeff();
  return s;
}

bool BoundReport::ok() const {
  return std::all_of(components.begin(), components.end(), [](const ComponentBounds& c) { return c.lower_ok && c.upper_ok; });
}

BoundReport iterate_bound_monitor(const GmmParams& params, const PenaltyConfig& cfg, const DataStats& stats) {
  BoundReport r;
  const double n = static_cast<double>(stats.n);
  const double inf = std::numeric_limits<double>::infinity();
  double psi_min = 0.0;
  double psi_norm = 0.0;
  if (cfg.Psi.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cfg.Psi, Eigen::EigenvaluesOnly);
    psi_min = es.eigenvalues().minCoeff();
    psi_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  r.lower = n + cfg.rho > 0.0 ? std::max(0.0, psi_min) * cfg.beta / (n + cfg.rho) : 0.0;
  const double at_one = n + cfg.rho > 0.0 ? (n * stats.max_sq_norm + cfg.beta * psi_norm) / (n + cfg.rho) : inf;
  const double at_zero = cfg.rho > 0.0 ? cfg.beta * psi_norm / cfg.rho : (cfg.beta * psi_norm > 0.0 ? inf : 0.0);
  r.upper = std::max(at_one, at_zero);

  constexpr double slack = 1e-9;
  for (const auto& S : params.components) {
    const Vector& ev = S.eigenvalues();
    ComponentBounds c;
    c.min_eigenvalue = ev.minCoeff();
    c.max_eigenvalue = ev.maxCoeff();
    c.lower_ok = c.min_eigenvalue >= r.lower * (1.0 - slack);
    c.upper_ok = c.max_eigenvalue <= r.upper * (1.0 + slack);
    r.components.push_back(c);
  }
  return r;
}

}  // namespace riemmix
