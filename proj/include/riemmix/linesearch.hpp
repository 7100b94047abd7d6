#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace riemmix {

/// Objective and slope at one trial step along the search curve.
struct ProbeSample {
  double phi;
  double dphi;
};

/// φ(α) = f(R_x(α ξ)) and φ'(α) = Df(R_x(α ξ))[T(ξ)], with the values at
/// α = 0 already known to the caller. A probe may report φ = +inf when the
/// retraction fails; the search then shrinks the step.
struct ScalarProbe {
  double phi0;
  double dphi0;
  std::function<ProbeSample(double)> at;
};

struct WolfeConfig {
  double c1 = 1e-4;
  double c2 = 0.9;
  int i_max = 50;
  double alpha_init = 1.0;
};

enum class LineSearchStatus {
  wolfe,        ///< both strong Wolfe conditions hold
  decrease_only ///< budget exhausted; best sufficient-decrease point returned
};

struct LineSearchResult {
  double alpha = 0.0;
  double phi_alpha = 0.0;
  double dphi_alpha = 0.0;
  int evals = 0;
  LineSearchStatus status = LineSearchStatus::wolfe;
};

/// Thrown when no probed step even achieves sufficient decrease.
class LineSearchFailure : public std::runtime_error {
 public:
  LineSearchFailure(const std::string& what, int evals) : std::runtime_error(what), evals_(evals) {}
  int evals() const noexcept { return evals_; }

 private:
  int evals_;
};

/// Strong Wolfe search: bracketing with cubic extrapolation (trial steps kept
/// within [1.1, 10] times the previous one), then zooming with safeguarded
/// cubic interpolation. Each phase probes at most i_max times.
/// Throws ArgumentError if dphi0 >= 0 or the configuration is invalid.
LineSearchResult wolfe_search(const ScalarProbe& probe, const WolfeConfig& cfg = {});

/// Strong Wolfe test exactly as certified by the search.
bool satisfies_strong_wolfe(double alpha, double phi0, double dphi0, double phi_alpha, double dphi_alpha,
                            double c1, double c2);

/// Minimizer over the closed interval between a and b of the Hermite cubic
/// matching (φ, φ') at both ends, clamped into the inner interval that keeps a
/// distance of 0.1 times the interval length from each end. Degenerate or
/// non-finite data, and ties between the two ends, give the midpoint.
double cubic_min(double a, double phi_a, double dphi_a, double b, double phi_b, double dphi_b);

/// Minimizer of the Hermite cubic over the whole real line, if it has one.
std::optional<double> cubic_critical_min(double a, double phi_a, double dphi_a, double b, double phi_b, double dphi_b);

/// Trial step 2 (f_k - f_{k-1}) / (Df(x_k) ξ_k); 1 when there is no previous
/// value or the formula is not a positive finite number.
double initial_step(double f_curr, std::optional<double> f_prev, double slope_curr);

}  // namespace riemmix
