#include "riemmix/linesearch.hpp"

#include "riemmix/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace riemmix {

namespace {

struct Point {
  double a;
  double phi;
  double dphi;
};

// Hermite cubic through (a, fa, da) and (b, fb, db), evaluated at x.
double hermite(double a, double fa, double da, double b, double fb, double db, double x) {
  const double h = b - a;
  const double t = (x - a) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * fa + (t3 - 2 * t2 + t) * h * da + (-2 * t3 + 3 * t2) * fb + (t3 - t2) * h * db;
}

bool all_finite(std::initializer_list<double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

bool satisfies_strong_wolfe(double alpha, double phi0, double dphi0, double phi_alpha, double dphi_alpha, double c1,
                            double c2) {
  return phi_alpha <= phi0 + c1 * alpha * dphi0 && std::abs(dphi_alpha) <= c2 * std::abs(dphi0);
}

std::optional<double> cubic_critical_min(double a, double fa, double da, double b, double fb, double db) {
  if (a == b || !all_finite({a, fa, da, b, fb, db})) return std::nullopt;
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return std::nullopt;
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::nullopt;
  const double x = b - (b - a) * (db + d2 - d1) / denom;
  if (!std::isfinite(x)) return std::nullopt;
  return x;
}

double cubic_min(double a, double fa, double da, double b, double fb, double db) {
  if (a == b) throw ArgumentError("cubic_min: degenerate interval");
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double len = hi - lo;
  const double mid = 0.5 * (lo + hi);
  const double inner_lo = lo + 0.1 * len;
  const double inner_hi = hi - 0.1 * len;

  double best = mid;
  if (all_finite({fa, da, fb, db})) {
    const double fa_val = fa;
    const double fb_val = fb;
    double best_val;
    if (fa_val < fb_val) {
      best = a;
      best_val = fa_val;
    } else if (fb_val < fa_val) {
      best = b;
      best_val = fb_val;
    } else {
      best = mid;
      best_val = fa_val;
    }
    if (auto x = cubic_critical_min(a, fa, da, b, fb, db); x && *x > lo && *x < hi) {
      const double v = hermite(a, fa, da, b, fb, db, *x);
      if (v <= best_val) best = *x;
    }
  }
  return std::clamp(best, inner_lo, inner_hi);
}

double initial_step(double f_curr, std::optional<double> f_prev, double slope_curr) {
  if (!f_prev) return 1.0;
  const double alpha = 2.0 * (f_curr - *f_prev) / slope_curr;
  if (!std::isfinite(alpha) || alpha <= 0.0) return 1.0;
  return alpha;
}

LineSearchResult wolfe_search(const ScalarProbe& probe, const WolfeConfig& cfg) {
  if (!(cfg.c1 > 0.0 && cfg.c1 < cfg.c2 && cfg.c2 < 1.0)) throw ArgumentError("wolfe_search: need 0 < c1 < c2 < 1");
  if (cfg.i_max < 1) throw ArgumentError("wolfe_search: i_max must be positive");
  if (!(cfg.alpha_init > 0.0) || !std::isfinite(cfg.alpha_init)) {
    throw ArgumentError("wolfe_search: alpha_init must be positive");
  }
  if (!std::isfinite(probe.phi0) || !std::isfinite(probe.dphi0)) {
    throw ArgumentError("wolfe_search: non-finite value or slope at the start point");
  }
  if (!(probe.dphi0 < 0.0)) throw ArgumentError("wolfe_search: not a descent direction");

  const double phi0 = probe.phi0;
  const double dphi0 = probe.dphi0;
  const double curvature_bound = cfg.c2 * std::abs(dphi0);
  int evals = 0;
  std::optional<Point> best;

  auto sample = [&](double a) {
    ProbeSample s = probe.at(a);
    ++evals;
    if (!std::isfinite(s.phi)) {
      s.phi = std::numeric_limits<double>::infinity();
      s.dphi = std::numeric_limits<double>::quiet_NaN();
    }
    return Point{a, s.phi, s.dphi};
  };
  auto sufficient = [&](const Point& p) { return p.phi <= phi0 + cfg.c1 * p.a * dphi0; };
  auto note = [&](const Point& p) {
    if (sufficient(p) && (!best || p.phi < best->phi)) best = p;
  };
  auto done = [&](const Point& p, LineSearchStatus status) {
    return LineSearchResult{p.a, p.phi, p.dphi, evals, status};
  };
  auto fallback = [&]() -> LineSearchResult {
    if (best) return done(*best, LineSearchStatus::decrease_only);
    throw LineSearchFailure("wolfe_search: no step achieved sufficient decrease", evals);
  };

  auto zoom = [&](Point lo, Point hi) -> LineSearchResult {
    for (int j = 0; j < cfg.i_max; ++j) {
      const double width = std::abs(hi.a - lo.a);
      if (width <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lo.a))) break;
      const Point p = sample(cubic_min(lo.a, lo.phi, lo.dphi, hi.a, hi.phi, hi.dphi));
      note(p);
      if (!sufficient(p) || p.phi >= lo.phi) {
        hi = p;
        continue;
      }
      if (std::abs(p.dphi) <= curvature_bound) return done(p, LineSearchStatus::wolfe);
      if (p.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = p;
    }
    return fallback();
  };

  Point prev{0.0, phi0, dphi0};
  double a = cfg.alpha_init;
  for (int i = 1; i <= cfg.i_max; ++i) {
    const Point cur = sample(a);
    note(cur);
    if (!sufficient(cur) || (i > 1 && cur.phi >= prev.phi)) return zoom(prev, cur);
    if (std::abs(cur.dphi) <= curvature_bound) return done(cur, LineSearchStatus::wolfe);
    if (cur.dphi >= 0.0) return zoom(cur, prev);
    // Slope still negative: extrapolate with the cubic through 0 and the current point.
    double next = 10.0 * a;
    if (auto x = cubic_critical_min(0.0, phi0, dphi0, cur.a, cur.phi, cur.dphi); x && *x > a) next = *x;
    next = std::min(10.0 * a, std::max(1.1 * a, next));
    prev = cur;
    a = next;
  }
  return fallback();
}

}  // namespace riemmix
