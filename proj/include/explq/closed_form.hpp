#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "model.hpp"

namespace explq {

/// V(x) = 1/2 k2 x^2 + k1 x + k0.
struct QuadraticValue {
  double k2 = 0.0;
  double k1 = 0.0;
  double k0 = 0.0;

  [[nodiscard]] double operator()(double x) const noexcept { return 0.5 * k2 * x * x + k1 * x + k0; }
  [[nodiscard]] double slope(double x) const noexcept { return k2 * x + k1; }
  [[nodiscard]] double curvature() const noexcept { return k2; }
};

/// Optimal exploratory value function together with its Gaussian feedback policy.
struct ExploratorySolution {
  QuadraticValue value;
  AffineGaussianPolicy policy;
};

/// Classical (non-exploratory) value w(x) = 1/2 a2 x^2 + a1 x + a0 and the
/// deterministic optimal feedback u*(x) = slope x + intercept.
struct ClassicalSolution {
  double alpha2 = 0.0;
  double alpha1 = 0.0;
  double alpha0 = 0.0;
  double feedback_slope = 0.0;
  double feedback_intercept = 0.0;

  [[nodiscard]] QuadraticValue value() const noexcept { return {alpha2, alpha1, alpha0}; }
  [[nodiscard]] double operator()(double x) const noexcept { return value()(x); }
  [[nodiscard]] double control(double x) const noexcept { return feedback_slope * x + feedback_intercept; }
  [[nodiscard]] AffineGaussianPolicy as_policy() const noexcept { return {feedback_slope, feedback_intercept, 0.0}; }
};

enum class HjbKind { exploratory, classical };

/// ln(2 pi e lambda / denom), assembled term by term so that tiny temperatures
/// do not underflow the argument.
[[nodiscard]] inline double log_gaussian_entropy_arg(double temperature, double denom) {
  return std::log(2.0 * std::numbers::pi) + 1.0 + std::log(temperature) - std::log(denom);
}

/// The control-curvature term N - k2 D^2 that normalizes the Gaussian policy.
[[nodiscard]] inline double precision_term(const LqModel& model, double k2) noexcept {
  const double D = model.dynamics.vol_control;
  return model.reward.control_quad - k2 * D * D;
}

// ---------------------------------------------------------------------------
// Riccati system for the quadratic ansatz and its residuals.
// ---------------------------------------------------------------------------

/// Coefficients of lead*k^2 - linear*k + constant = 0, which is the k2 equation
/// multiplied through by N - k D^2.
struct RiccatiQuadratic {
  double lead = 0.0;
  double linear = 0.0;
  double constant = 0.0;
};

[[nodiscard]] inline RiccatiQuadratic riccati_quadratic(const LqModel& model) noexcept {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double beta = B + C * D;
  const double excess = model.discount - (2.0 * A + C * C);
  return {beta * beta + excess * D * D, excess * N + 2.0 * beta * R - D * D * M, R * R - M * N};
}

/// rho k2 - [ (k2 (B+CD) - R)^2 / (N - k2 D^2) + k2 (2A + C^2) - M ].
[[nodiscard]] inline double riccati_residual(const LqModel& model, double k2) {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double beta = B + C * D;
  const double gain = k2 * beta - R;
  return model.discount * k2 - (gain * gain / precision_term(model, k2) + k2 * (2.0 * A + C * C) - M);
}

/// rho k1 - [ (k1 B - Q)(k2 (B+CD) - R) / (N - k2 D^2) + k1 A - P ].
[[nodiscard]] inline double linear_residual(const LqModel& model, double k2, double k1) {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  return model.discount * k1 -
         ((k1 * B - Q) * (k2 * (B + C * D) - R) / precision_term(model, k2) + k1 * A - P);
}

/// rho k0 - [ (k1 B - Q)^2 / (2 (N - k2 D^2)) + lambda/2 (ln(2 pi e lambda/(N - k2 D^2)) - 1) ].
[[nodiscard]] inline double constant_residual(const LqModel& model, double k2, double k1, double k0) {
  const double B = model.dynamics.drift_control;
  const double Q = model.reward.control_lin;
  const double denom = precision_term(model, k2);
  const double shift = k1 * B - Q;
  return model.discount * k0 - (shift * shift / (2.0 * denom) +
                                0.5 * model.temperature * (log_gaussian_entropy_arg(model.temperature, denom) - 1.0));
}

/// The concave root of the k2 equation. Evaluated in the rationalized form
/// 2c / (b + sqrt(b^2 - 4ac)) of the minus-discriminant branch, which stays
/// finite when the leading coefficient vanishes (e.g. B = D = 0).
[[nodiscard]] inline double solve_k2(const LqModel& model) {
  if (model.reward.state_quad == 0.0 && model.reward.cross == 0.0) return 0.0;
  const auto [lead, linear, constant] = riccati_quadratic(model);
  const double disc = linear * linear - 4.0 * lead * constant;
  if (!(disc >= 0.0)) fail(ErrorKind::numerical, "no concave root: negative Riccati discriminant");
  const double denom = linear + std::sqrt(disc);
  if (!(denom > 0.0)) fail(ErrorKind::numerical, "no concave root: Riccati branch is not concave");
  return 2.0 * constant / denom;
}

/// The minus-discriminant branch written out as (b - sqrt(b^2 - 4ac)) / (2a).
/// Diagnostic only; undefined when a = 0.
[[nodiscard]] inline double riccati_root_verbatim(const LqModel& model) {
  const auto [lead, linear, constant] = riccati_quadratic(model);
  if (lead == 0.0) fail(ErrorKind::numerical, "verbatim Riccati root undefined for vanishing leading coefficient");
  return 0.5 * (linear - std::sqrt(linear * linear - 4.0 * lead * constant)) / lead;
}

/// The second, convex quadratic solution of the HJB equation. Not a value
/// function; exposed for diagnostics.
[[nodiscard]] inline double convex_riccati_root(const LqModel& model) {
  const auto [lead, linear, constant] = riccati_quadratic(model);
  if (!(lead > 0.0)) fail(ErrorKind::numerical, "convex Riccati root requires a positive leading coefficient");
  return 0.5 * (linear + std::sqrt(linear * linear - 4.0 * lead * constant)) / lead;
}

/// Independent route to the concave root: bisection of riccati_residual on
/// (-inf, 0], where the residual is positive at 0 whenever R^2 < MN.
[[nodiscard]] inline double riccati_root_bisection(const LqModel& model) {
  if (!(riccati_residual(model, 0.0) > 0.0)) {
    fail(ErrorKind::numerical, "bisection needs a positive Riccati residual at 0");
  }
  double hi = 0.0;
  double lo = -1.0;
  for (int i = 0; riccati_residual(model, lo) >= 0.0; ++i) {
    if (i > 2000) fail(ErrorKind::numerical, "bisection could not bracket the concave root");
    hi = lo;
    lo *= 2.0;
  }
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (riccati_residual(model, mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// k1 = (P (N - k2 D^2) - Q R) / (k2 B (B + C D) + (A - rho)(N - k2 D^2) - B R).
[[nodiscard]] inline double solve_k1(const LqModel& model, double k2) {
  if (model.state_independent()) return 0.0;
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double d = precision_term(model, k2);
  const double denom = k2 * B * (B + C * D) + (A - model.discount) * d - B * R;
  if (std::abs(denom) <= Tolerances::degenerate_denominator) {
    fail(ErrorKind::numerical, "degenerate linear term: k1 denominator vanishes");
  }
  return (P * d + Q * (k2 * (B + C * D) - R)) / denom + 0.0;
}

/// k0 = (k1 B - Q)^2 / (2 rho (N - k2 D^2)) + lambda/(2 rho) (ln(2 pi e lambda/(N - k2 D^2)) - 1).
[[nodiscard]] inline double solve_k0(const LqModel& model, double k2, double k1) {
  const double d = precision_term(model, k2);
  if (!(d > 0.0)) fail(ErrorKind::numerical, "N - k2 D^2 must be positive");
  const double shift = k1 * model.dynamics.drift_control - model.reward.control_lin;
  const double rho = model.discount;
  const double lambda = model.temperature;
  return shift * shift / (2.0 * rho * d) + lambda / (2.0 * rho) * (log_gaussian_entropy_arg(lambda, d) - 1.0);
}

/// Gaussian feedback policy induced by a quadratic value with curvature k2 and
/// slope k1.
[[nodiscard]] inline AffineGaussianPolicy gaussian_policy(const LqModel& model, double k2, double k1) {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double d = precision_term(model, k2);
  if (!(d > 0.0)) fail(ErrorKind::numerical, "N - k2 D^2 must be positive");
  return {(k2 * (B + C * D) - R) / d, (k1 * B - Q) / d + 0.0, model.temperature / d};
}

[[nodiscard]] inline ExploratorySolution exploratory_solution(const LqModel& model) {
  const double k2 = solve_k2(model);
  const double k1 = solve_k1(model, k2);
  const double k0 = solve_k0(model, k2, k1);
  return {{k2, k1, k0}, gaussian_policy(model, k2, k1)};
}

[[nodiscard]] inline ClassicalSolution classical_solution(const LqModel& model) {
  const double k2 = solve_k2(model);
  const double k1 = solve_k1(model, k2);
  const double d = precision_term(model, k2);
  if (!(d > 0.0)) fail(ErrorKind::numerical, "N - k2 D^2 must be positive");
  const double shift = k1 * model.dynamics.drift_control - model.reward.control_lin;
  const auto mean = gaussian_policy(model, k2, k1);
  return {k2, k1, shift * shift / (2.0 * model.discount * d), mean.slope, mean.intercept};
}

/// rho v(x) minus the right-hand side of the exploratory or classical HJB
/// equation, with v' = k2 x + k1 and v'' = k2.
[[nodiscard]] inline double hjb_residual(const LqModel& model, const QuadraticValue& value, double x,
                                         HjbKind kind) {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double v1 = value.slope(x);
  const double v2 = value.curvature();
  const double d = N - D * D * v2;
  if (!(d > 0.0)) fail(ErrorKind::numerical, "N - k2 D^2 must be positive");
  const double gain = C * D * x * v2 + B * v1 - R * x - Q;
  double rhs = gain * gain / (2.0 * d) + 0.5 * (C * C * v2 - M) * x * x + (A * v1 - P) * x;
  if (kind == HjbKind::exploratory) {
    rhs += 0.5 * model.temperature * (log_gaussian_entropy_arg(model.temperature, d) - 1.0);
  }
  return model.discount * value(x) - rhs;
}

/// Boltzmann density exp((r + 1/2 sigma^2 v'' + b v') / lambda), normalized over
/// u in R. The exponent is quadratic in u; its coefficients are read off the
/// reward and dynamics and the normalizer is the Gaussian integral.
[[nodiscard]] inline double softmax_density(const LqModel& model, const QuadraticValue& value, double x, double u) {
  const auto& [A, B, C, D] = model.dynamics;
  const auto& [M, N, R, P, Q] = model.reward;
  const double v1 = value.slope(x);
  const double v2 = value.curvature();
  const double lambda = model.temperature;
  const double quad = (-0.5 * N + 0.5 * D * D * v2) / lambda;
  const double lin = (-R * x - Q + C * D * x * v2 + B * v1) / lambda;
  if (!(quad < 0.0)) fail(ErrorKind::numerical, "Boltzmann density is not integrable: N - D^2 v'' <= 0");
  const double mode = -lin / (2.0 * quad);
  const double du = u - mode;
  return std::sqrt(-quad / std::numbers::pi) * std::exp(quad * du * du);
}

/// Gaussian pdf N(u | mean, variance).
[[nodiscard]] inline double gaussian_pdf(double u, double mean, double variance) {
  const double z = u - mean;
  return std::exp(-0.5 * z * z / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

/// lambda / (2 rho); depends on nothing else.
[[nodiscard]] inline double exploration_cost(const LqModel& model) noexcept {
  return model.temperature / (2.0 * model.discount);
}

/// V^cl(x) - (V(x) + lambda * discounted entropy integral) from the closed
/// forms, where the integral of pi* ln pi* is -1/2 ln(2 pi e lambda/(N - k2 D^2))
/// at every instant. Equals exploration_cost(model) for every x.
[[nodiscard]] inline double exploration_cost_decomposition(const LqModel& model, double x) {
  const auto expl = exploratory_solution(model);
  const auto cl = classical_solution(model);
  const double log_arg = log_gaussian_entropy_arg(model.temperature, precision_term(model, expl.value.k2));
  return cl(x) - expl.value(x) + model.temperature / (2.0 * model.discount) * log_arg;
}

/// V(x) - w(x) = lambda/(2 rho) (ln(2 pi e lambda/(N - k2 D^2)) - 1); independent of x.
[[nodiscard]] inline double exploration_value_gap(const LqModel& model) {
  const double k2 = solve_k2(model);
  const double lambda = model.temperature;
  return lambda / (2.0 * model.discount) * (log_gaussian_entropy_arg(lambda, precision_term(model, k2)) - 1.0);
}

struct SweepRow {
  double temperature = 0.0;
  double variance = 0.0;
  double value_gap = 0.0;  // V(x) - V^cl(x)
  double cost = 0.0;
  double mean_at_probe = 0.0;
};

/// Re-solves the model at each temperature. The mean (slope, intercept) does
/// not depend on lambda; the variance is linear in it.
[[nodiscard]] inline std::vector<SweepRow> lambda_sweep(const LqModel& model, const std::vector<double>& temperatures,
                                                        double probe_x = 1.0) {
  std::vector<SweepRow> rows;
  rows.reserve(temperatures.size());
  for (double lambda : temperatures) {
    if (!(lambda > 0.0)) fail(ErrorKind::validation, "lambda sweep values must be positive");
    LqModel m = model;
    m.temperature = lambda;
    const auto sol = exploratory_solution(m);
    rows.push_back({lambda, sol.policy.variance, exploration_value_gap(m), exploration_cost(m),
                    sol.policy.mean(probe_x)});
  }
  return rows;
}

}  // namespace explq
