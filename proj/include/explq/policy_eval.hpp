#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "closed_form.hpp"
#include "error.hpp"
#include "model.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sde.hpp"

namespace explq {

/// Monte Carlo estimate of a discounted objective over [0, T]. The tail
/// beyond T is bounded separately and never mixed into std_error.
struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double truncation_bound = 0.0;
  std::size_t n_paths = 0;
  double horizon = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  bool truncation_warning = false;

  /// |mean - target| <= k std_error + truncation_bound (+ rounding slack).
  [[nodiscard]] bool agrees_with(double target, double k_se = 3.0) const noexcept {
    return std::abs(mean - target) <= k_se * std_error + truncation_bound + Tolerances::bound;
  }
};

/// Expected running reward of the Gaussian policy at state x plus the entropy
/// bonus lambda H(pi). A deterministic policy (variance 0) yields r(x, u(x)).
[[nodiscard]] inline double running_integrand(const LqModel& model, const AffineGaussianPolicy& policy, double x,
                                              bool require_entropy = false) {
  if (policy.variance < 0.0) fail(ErrorKind::validation, "policy variance must be >= 0");
  const double mu = policy.mean(x);
  if (policy.variance == 0.0) {
    if (require_entropy) fail(ErrorKind::validation, "entropy term needs policy variance > 0");
    return model.reward_at(x, mu);
  }
  const auto& r = model.reward;
  const double expected_reward = -(0.5 * r.state_quad * x * x + r.cross * x * mu +
                                   0.5 * r.control_quad * (mu * mu + policy.variance) + r.state_lin * x +
                                   r.control_lin * mu);
  const double entropy = 0.5 * (std::log(2.0 * std::numbers::pi * policy.variance) + 1.0);
  return expected_reward + model.temperature * entropy;
}

/// r(x, u) - lambda ln pi(u | x) for one sampled action.
[[nodiscard]] inline double sampled_integrand(const LqModel& model, const AffineGaussianPolicy& policy, double x,
                                              double u) {
  return model.reward_at(x, u) - model.temperature * std::log(gaussian_pdf(u, policy.mean(x), policy.variance));
}

struct EvalOptions {
  unsigned parallelism = 1;
  /// Combine the step-h and step-2h sums on the same increments as 2 I_h - I_2h,
  /// cancelling the first-order Euler bias. Needs an even step count.
  bool richardson = true;
  /// Draw actions from the policy instead of integrating them out.
  bool sample_actions = false;
  /// Truncation bounds above this set ValueEstimate::truncation_warning.
  double truncation_tolerance = 1e-3;
};

namespace detail {

/// Weight of the left-endpoint value on [t_k, t_k + h]: the exact integral of
/// e^{-rho t} over the interval.
struct DiscountWeights {
  double first = 0.0;
  double ratio = 1.0;
  DiscountWeights(double rho, double h) : first(-std::expm1(-rho * h) / rho), ratio(std::exp(-rho * h)) {}
};

/// Discounted integral of the running reward along one Euler path on the
/// increments, taking `stride` of them per step.
[[nodiscard]] inline double discounted_path_integral(const LqModel& model, const AffineGaussianPolicy& policy,
                                                     const ClosedLoopSde& sde, double x0,
                                                     const std::vector<double>& increments, double dt,
                                                     std::size_t stride, bool sample_actions,
                                                     std::uint64_t seed, std::uint64_t path) {
  const double h = dt * static_cast<double>(stride);
  const DiscountWeights w(model.discount, h);
  const double sd = std::sqrt(policy.variance);
  double weight = w.first;
  double x = x0;
  double total = 0.0;
  for (std::size_t k = 0; k < increments.size(); k += stride) {
    double f;
    if (sample_actions && policy.variance > 0.0) {
      const double u = policy.mean(x) + sd * keyed_normal(seed, path, static_cast<std::uint32_t>(k), Stream::action);
      f = sampled_integrand(model, policy, x, u);
    } else {
      f = running_integrand(model, policy, x);
    }
    total += weight * f;
    weight *= w.ratio;
    double dw = 0.0;
    for (std::size_t i = 0; i < stride; ++i) dw += increments[k + i];
    x = sde.euler_step(x, dw, h);
    if (!(std::abs(x) <= Tolerances::divergence)) {
      fail(ErrorKind::numerical, "simulation diverged (|X| > 1e12) on path " + std::to_string(path) + " at step " +
                                     std::to_string(k / stride + 1));
    }
  }
  return total;
}

[[nodiscard]] inline double estimator(const LqModel& model, const AffineGaussianPolicy& policy,
                                      const ClosedLoopSde& sde, double x0, const BrownianPath& bp,
                                      const EvalOptions& opts) {
  const double fine = discounted_path_integral(model, policy, sde, x0, bp.increments, bp.dt, 1,
                                               opts.sample_actions, bp.seed, bp.path_index);
  if (!opts.richardson) return fine;
  const double coarse = discounted_path_integral(model, policy, sde, x0, bp.increments, bp.dt, 2,
                                                 opts.sample_actions, bp.seed, bp.path_index);
  return 2.0 * fine - coarse;
}

inline void summarize(ValueEstimate& est, const std::vector<double>& samples) {
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double n = static_cast<double>(samples.size());
  est.mean = sum / n;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - est.mean) * (s - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
}

inline void check_eval_inputs(const PathGrid& grid, std::size_t n_paths, const EvalOptions& opts) {
  grid.check();
  if (n_paths < 1) fail(ErrorKind::validation, "need at least one path");
  if (opts.richardson && grid.n_steps % 2 != 0) {
    fail(ErrorKind::validation, "extrapolated estimator needs an even step count");
  }
}

}  // namespace detail

/// e^{-rho T} (1/2 |q2| m + |q1| sqrt(m) + |q0|) with m the second moment at T.
[[nodiscard]] inline double tail_bound(double rho, double horizon, const QuadraticValue& v, double second_moment) {
  const double m = std::max(0.0, second_moment);
  return std::exp(-rho * horizon) * (0.5 * std::abs(v.k2) * m + std::abs(v.k1) * std::sqrt(m) + std::abs(v.k0));
}

/// Discounted objective of `policy` from x0 (entropy-regularized, or classical
/// when the policy is deterministic), by Monte Carlo over the grid horizon.
[[nodiscard]] inline ValueEstimate mc_value(const LqModel& model, const AffineGaussianPolicy& policy, double x0,
                                            const PathGrid& grid, std::uint64_t seed, std::size_t n_paths,
                                            const EvalOptions& opts = {}) {
  detail::check_eval_inputs(grid, n_paths, opts);
  const auto sde = ClosedLoopSde::exploratory(model, policy);
  std::vector<double> samples(n_paths);
  parallel_for(n_paths, opts.parallelism, [&](std::size_t p) {
    samples[p] = detail::estimator(model, policy, sde, x0, make_brownian_path(seed, p, grid), opts);
  });
  ValueEstimate est;
  est.n_paths = n_paths;
  est.horizon = grid.horizon();
  est.dt = grid.dt;
  est.seed = seed;
  detail::summarize(est, samples);
  const auto coeffs = derived_coeffs(model, policy);
  if (policy.deterministic()) {
    const auto cl = classical_solution(model);
    est.truncation_bound = tail_bound(model.discount, est.horizon, cl.value(),
                                      second_moment_curve(coeffs, x0, est.horizon, MomentKind::classical));
  } else {
    const auto sol = exploratory_solution(model);
    est.truncation_bound = tail_bound(model.discount, est.horizon, sol.value,
                                      second_moment_curve(coeffs, x0, est.horizon, MomentKind::exploratory));
  }
  est.truncation_warning = est.truncation_bound > opts.truncation_tolerance;
  return est;
}

/// Exploration cost V^cl(x0) - (V(x0) + lambda E int e^{-rho t} int pi ln pi du dt)
/// by Monte Carlo: the classical and exploratory optimal processes share
/// Brownian increments, and the entropy integral (constant in the state) is
/// accumulated over the same horizon.
[[nodiscard]] inline ValueEstimate mc_exploration_cost(const LqModel& model, double x0, const PathGrid& grid,
                                                       std::uint64_t seed, std::size_t n_paths,
                                                       const EvalOptions& opts = {}) {
  detail::check_eval_inputs(grid, n_paths, opts);
  const auto sol = exploratory_solution(model);
  const auto cl = classical_solution(model);
  const auto cl_policy = cl.as_policy();
  const auto ex_sde = ClosedLoopSde::exploratory(model, sol.policy);
  const auto cl_sde = ClosedLoopSde::exploratory(model, cl_policy);
  const double log_k = log_gaussian_entropy_arg(model.temperature, precision_term(model, sol.value.k2));
  const double entropy_rate = 0.5 * model.temperature * log_k;
  const double rho = model.discount;
  const double horizon = grid.horizon();
  const double discount_mass = -std::expm1(-rho * horizon) / rho;
  EvalOptions inner = opts;
  inner.sample_actions = false;
  std::vector<double> samples(n_paths);
  parallel_for(n_paths, opts.parallelism, [&](std::size_t p) {
    const auto bp = make_brownian_path(seed, p, grid);
    const double classical = detail::estimator(model, cl_policy, cl_sde, x0, bp, inner);
    const double exploratory = detail::estimator(model, sol.policy, ex_sde, x0, bp, inner);
    samples[p] = classical - exploratory + entropy_rate * discount_mass;
  });
  ValueEstimate est;
  est.n_paths = n_paths;
  est.horizon = horizon;
  est.dt = grid.dt;
  est.seed = seed;
  detail::summarize(est, samples);
  const auto ex_coeffs = derived_coeffs(model, sol.policy);
  const auto cl_coeffs = derived_coeffs(model, cl_policy);
  est.truncation_bound =
      tail_bound(rho, horizon, cl.value(), second_moment_curve(cl_coeffs, x0, horizon, MomentKind::classical)) +
      tail_bound(rho, horizon, sol.value, second_moment_curve(ex_coeffs, x0, horizon, MomentKind::exploratory)) +
      std::exp(-rho * horizon) * std::abs(entropy_rate) / rho;
  est.truncation_warning = est.truncation_bound > opts.truncation_tolerance;
  return est;
}

}  // namespace explq
