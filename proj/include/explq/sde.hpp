#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "closed_form.hpp"
#include "constants.hpp"
#include "error.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace explq {

/// Uniform time grid t_k = k dt, k = 0..n_steps.
struct PathGrid {
  double dt = 1e-3;
  std::size_t n_steps = 1;

  [[nodiscard]] double horizon() const noexcept { return dt * static_cast<double>(n_steps); }
  [[nodiscard]] double time(std::size_t k) const noexcept { return dt * static_cast<double>(k); }

  void check() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::validation, "grid dt must be positive");
    if (n_steps < 1) fail(ErrorKind::validation, "grid needs at least one step");
    if (n_steps > std::numeric_limits<std::uint32_t>::max()) fail(ErrorKind::validation, "grid has too many steps");
  }

  /// Grid of step dt reaching `horizon`; the ratio must be an integer.
  [[nodiscard]] static PathGrid spanning(double horizon, double dt) {
    const double ratio = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
      fail(ErrorKind::validation, "horizon is not an integer multiple of dt");
    }
    PathGrid g{dt, n};
    g.check();
    return g;
  }
};

/// One Brownian path on a grid: increments[k] ~ N(0, dt), reproducible from
/// (seed, path_index) alone.
struct BrownianPath {
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  double dt = 0.0;
  std::vector<double> increments;

  [[nodiscard]] std::size_t n_steps() const noexcept { return increments.size(); }

  /// W at the grid nodes, W_0 = 0.
  [[nodiscard]] std::vector<double> levels() const {
    std::vector<double> w(increments.size() + 1, 0.0);
    for (std::size_t k = 0; k < increments.size(); ++k) w[k + 1] = w[k] + increments[k];
    return w;
  }

  /// Same path on a grid `factor` times coarser (increments summed in order).
  [[nodiscard]] BrownianPath coarsen(std::size_t factor) const {
    if (factor < 1 || increments.size() % factor != 0) {
      fail(ErrorKind::validation, "coarsening factor must divide the step count");
    }
    BrownianPath out{seed, path_index, dt * static_cast<double>(factor), {}};
    out.increments.resize(increments.size() / factor);
    for (std::size_t j = 0; j < out.increments.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < factor; ++i) s += increments[j * factor + i];
      out.increments[j] = s;
    }
    return out;
  }
};

[[nodiscard]] inline double brownian_increment(std::uint64_t seed, std::uint64_t path, std::size_t step, double dt) {
  return std::sqrt(dt) * keyed_normal(seed, path, static_cast<std::uint32_t>(step), Stream::brownian);
}

[[nodiscard]] inline BrownianPath make_brownian_path(std::uint64_t seed, std::uint64_t path, const PathGrid& grid) {
  grid.check();
  BrownianPath bp{seed, path, grid.dt, std::vector<double>(grid.n_steps)};
  for (std::size_t k = 0; k < grid.n_steps; ++k) bp.increments[k] = brownian_increment(seed, path, k, grid.dt);
  return bp;
}

/// Closed-loop scalar SDE dX = (a1 X + a2) dt + sigma(X) dW under an affine
/// feedback. With a Gaussian policy (variance > 0) sigma is the nonnegative
/// root sqrt((b1 X + b2)^2 + c1); with a deterministic feedback it is the
/// signed classical volatility b1 X + b2, so a zero-variance policy reproduces
/// the classical path exactly.
class ClosedLoopSde {
 public:
  ClosedLoopSde(const DerivedCoeffs& coeffs, bool signed_diffusion) : c_(coeffs), signed_(signed_diffusion) {}

  [[nodiscard]] static ClosedLoopSde exploratory(const LqModel& model, const AffineGaussianPolicy& policy) {
    return {derived_coeffs(model, policy), policy.deterministic()};
  }
  [[nodiscard]] static ClosedLoopSde classical(const LqModel& model, double slope, double intercept) {
    return {derived_coeffs(model, {slope, intercept, 0.0}), true};
  }

  [[nodiscard]] const DerivedCoeffs& coeffs() const noexcept { return c_; }
  [[nodiscard]] double drift(double x) const noexcept { return c_.drift_slope * x + c_.drift_intercept; }
  [[nodiscard]] double diffusion(double x) const noexcept {
    const double v = c_.vol_slope * x + c_.vol_intercept;
    return signed_ ? v : std::sqrt(v * v + c_.noise_variance);
  }
  [[nodiscard]] double euler_step(double x, double dw, double dt) const noexcept {
    return x + drift(x) * dt + diffusion(x) * dw;
  }

 private:
  DerivedCoeffs c_;
  bool signed_;
};

enum class PathKind { exploratory, classical, exact };

struct SimOptions {
  unsigned parallelism = 1;
  std::size_t record_stride = 1;  // keep every k-th node
};

/// Simulated paths, stored at every record_stride-th grid node. A path whose
/// |X| exceeds the divergence threshold is frozen and flagged with the step
/// index at which it crossed.
struct TrajectoryBatch {
  PathGrid grid;
  std::size_t n_paths = 0;
  std::size_t record_stride = 1;
  std::uint64_t seed = 0;
  PathKind kind = PathKind::exploratory;
  double x0 = 0.0;
  std::vector<double> states;
  std::vector<std::int64_t> diverged_step;

  [[nodiscard]] std::size_t n_records() const noexcept { return grid.n_steps / record_stride + 1; }
  [[nodiscard]] double time(std::size_t r) const noexcept { return grid.time(r * record_stride); }
  [[nodiscard]] double state(std::size_t p, std::size_t r) const { return states[p * n_records() + r]; }
  [[nodiscard]] double endpoint(std::size_t p) const { return state(p, n_records() - 1); }
  [[nodiscard]] bool diverged(std::size_t p) const { return diverged_step[p] >= 0; }
  [[nodiscard]] std::size_t n_diverged() const {
    return static_cast<std::size_t>(std::count_if(diverged_step.begin(), diverged_step.end(),
                                                  [](std::int64_t s) { return s >= 0; }));
  }
};

/// Euler-Maruyama batch on keyed Brownian increments; the result is
/// independent of opts.parallelism.
[[nodiscard]] inline TrajectoryBatch simulate_closed_loop(const ClosedLoopSde& sde, PathKind kind, double x0,
                                                          const PathGrid& grid, std::uint64_t seed,
                                                          std::size_t n_paths, const SimOptions& opts = {}) {
  grid.check();
  if (opts.record_stride < 1 || grid.n_steps % opts.record_stride != 0) {
    fail(ErrorKind::validation, "record stride must divide the step count");
  }
  TrajectoryBatch batch{grid, n_paths, opts.record_stride, seed, kind, x0, {}, {}};
  const std::size_t records = batch.n_records();
  batch.states.assign(n_paths * records, 0.0);
  batch.diverged_step.assign(n_paths, -1);
  parallel_for(n_paths, opts.parallelism, [&](std::size_t p) {
    double* out = batch.states.data() + p * records;
    double x = x0;
    out[0] = x;
    bool alive = true;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
      if (alive) {
        const double next = sde.euler_step(x, brownian_increment(seed, p, k, grid.dt), grid.dt);
        if (!(std::abs(next) <= Tolerances::divergence)) {
          batch.diverged_step[p] = static_cast<std::int64_t>(k + 1);
          alive = false;
          if (std::isfinite(next)) x = next;
        } else {
          x = next;
        }
      }
      if ((k + 1) % opts.record_stride == 0) out[(k + 1) / opts.record_stride] = x;
    }
  });
  return batch;
}

[[nodiscard]] inline TrajectoryBatch simulate_exploratory(const LqModel& model, const AffineGaussianPolicy& policy,
                                                          double x0, const PathGrid& grid, std::uint64_t seed,
                                                          std::size_t n_paths, const SimOptions& opts = {}) {
  return simulate_closed_loop(ClosedLoopSde::exploratory(model, policy), PathKind::exploratory, x0, grid, seed,
                              n_paths, opts);
}

[[nodiscard]] inline TrajectoryBatch simulate_classical(const LqModel& model, double slope, double intercept,
                                                        double x0, const PathGrid& grid, std::uint64_t seed,
                                                        std::size_t n_paths, const SimOptions& opts = {}) {
  return simulate_closed_loop(ClosedLoopSde::classical(model, slope, intercept), PathKind::classical, x0, grid,
                              seed, n_paths, opts);
}

/// Sample mean and raw second moment across non-diverged paths at one record.
struct NodeStats {
  double mean = 0.0;
  double mean_se = 0.0;
  double second = 0.0;
  double second_se = 0.0;
  std::size_t n_used = 0;
};

[[nodiscard]] inline NodeStats node_stats(const TrajectoryBatch& batch, std::size_t record) {
  NodeStats s;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    if (batch.diverged(p)) continue;
    const double x = batch.state(p, record);
    sum += x;
    sum2 += x * x;
    ++s.n_used;
  }
  if (s.n_used == 0) return s;
  const double n = static_cast<double>(s.n_used);
  s.mean = sum / n;
  s.second = sum2 / n;
  if (s.n_used > 1) {
    double dev = 0.0, dev2 = 0.0;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
      if (batch.diverged(p)) continue;
      const double x = batch.state(p, record);
      dev += (x - s.mean) * (x - s.mean);
      dev2 += (x * x - s.second) * (x * x - s.second);
    }
    s.mean_se = std::sqrt(dev / (n - 1.0) / n);
    s.second_se = std::sqrt(dev2 / (n - 1.0) / n);
  }
  return s;
}

/// Euler-Maruyama on a given Brownian path, stepping over `stride` fine
/// increments at a time. Returns the coarse-node values.
[[nodiscard]] inline std::vector<double> euler_path(const ClosedLoopSde& sde, double x0, const BrownianPath& path,
                                                    std::size_t stride = 1) {
  if (stride < 1 || path.n_steps() % stride != 0) fail(ErrorKind::validation, "stride must divide the step count");
  const std::size_t n = path.n_steps() / stride;
  const double h = path.dt * static_cast<double>(stride);
  std::vector<double> x(n + 1, x0);
  for (std::size_t j = 0; j < n; ++j) {
    double dw = 0.0;
    for (std::size_t i = 0; i < stride; ++i) dw += path.increments[j * stride + i];
    x[j + 1] = sde.euler_step(x[j], dw, h);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Exact reference paths
// ---------------------------------------------------------------------------

/// dX = (a1 X + a2) dt + |b1| |X| dW (no control in the volatility). Solved as
/// a geometric Brownian motion with an affine forcing; the sign regime is
/// x0 >= 0, a2 >= 0 (nonnegative path) or x0 <= 0, a2 <= 0 (nonpositive path).
/// The forcing integral uses the trapezoid rule on the path grid.
[[nodiscard]] inline std::vector<double> exact_affine_gbm_path(const DerivedCoeffs& c, double x0,
                                                               const BrownianPath& path, std::size_t stride = 1) {
  if (c.vol_intercept != 0.0 || c.noise_variance != 0.0) {
    fail(ErrorKind::validation, "exact GBM path needs a volatility proportional to the state");
  }
  if ((x0 > 0.0 && c.drift_intercept < 0.0) || (x0 < 0.0 && c.drift_intercept > 0.0)) {
    fail(ErrorKind::validation, "unsupported sign regime: no explicit solution when x0 and the drift intercept "
                                "have opposite signs");
  }
  if (stride < 1 || path.n_steps() % stride != 0) fail(ErrorKind::validation, "stride must divide the step count");
  const bool nonnegative = x0 > 0.0 || (x0 == 0.0 && c.drift_intercept >= 0.0);
  const double vol = (nonnegative ? 1.0 : -1.0) * std::abs(c.vol_slope);
  const double growth = c.drift_slope - 0.5 * c.vol_slope * c.vol_slope;
  std::vector<double> out;
  out.reserve(path.n_steps() / stride + 1);
  out.push_back(x0);
  double w = 0.0;
  double forcing = 0.0;  // int_0^t exp(-growth s - vol W_s) ds
  double g_prev = 1.0;
  for (std::size_t k = 0; k < path.n_steps(); ++k) {
    w += path.increments[k];
    const double t = path.dt * static_cast<double>(k + 1);
    const double exponent = growth * t + vol * w;
    const double g = std::exp(-exponent);
    forcing += 0.5 * (g_prev + g) * path.dt;
    g_prev = g;
    if ((k + 1) % stride == 0) out.push_back(std::exp(exponent) * (x0 + c.drift_intercept * forcing));
  }
  return out;
}

/// Var(I | dW) for I = int_0^dt e^{rate (dt - s)} dW_s over one step, i.e.
/// Var(I) - Cov(I, dW)^2 / dt. A series in h = rate dt replaces the
/// cancelling closed form for small |h|.
[[nodiscard]] inline double ou_step_residual_variance(double rate, double dt) noexcept {
  const double h = rate * dt;
  if (h == 0.0) return 0.0;
  if (std::abs(h) < 1e-2) {
    return dt * h * h *
           (1.0 / 12 + h * (1.0 / 12 + h * (17.0 / 360 + h * (7.0 / 360 + h * (43.0 / 6720 + h * 107.0 / 60480)))));
  }
  const double r = std::expm1(h) / h;
  return dt * (std::expm1(2.0 * h) / (2.0 * h) - r * r);
}

/// dX = (a1 X + a2) dt + sigma dW with constant sigma = sqrt(b2^2 + c1).
/// Advanced by the exact Gaussian transition per grid step: the stochastic
/// convolution over each step is split into its regression on the step's
/// Brownian increment plus an independent residual drawn from the auxiliary
/// stream, so the path is exact jointly with the grid values of W.
[[nodiscard]] inline std::vector<double> exact_ou_path(const DerivedCoeffs& c, double x0, const BrownianPath& path,
                                                       std::size_t stride = 1) {
  if (c.vol_slope != 0.0) fail(ErrorKind::validation, "exact OU path needs a state-independent volatility");
  if (stride < 1 || path.n_steps() % stride != 0) fail(ErrorKind::validation, "stride must divide the step count");
  const double sigma = std::sqrt(c.vol_intercept * c.vol_intercept + c.noise_variance);
  const double dt = path.dt;
  const double a = c.drift_slope;
  const double h = a * dt;
  double decay = 1.0;
  double regression = 1.0;  // Cov(I, dW) / dt for I = int e^{a(t_{k+1}-s)} dW_s over one step
  double shift = c.drift_intercept * dt;
  if (a != 0.0) {
    decay = std::exp(h);
    regression = std::expm1(h) / h;
    shift = c.drift_intercept * dt * regression;
  }
  const double residual_var = ou_step_residual_variance(a, dt);
  const double residual_sd = std::sqrt(std::max(0.0, residual_var));
  std::vector<double> out;
  out.reserve(path.n_steps() / stride + 1);
  out.push_back(x0);
  double x = x0;
  for (std::size_t k = 0; k < path.n_steps(); ++k) {
    double conv = regression * path.increments[k];
    if (residual_sd > 0.0) {
      conv += residual_sd * keyed_normal(path.seed, path.path_index, static_cast<std::uint32_t>(k), Stream::auxiliary);
    }
    x = decay * x + shift + sigma * conv;
    if ((k + 1) % stride == 0) out.push_back(x);
  }
  return out;
}

/// Pathwise representation X_t = F(W_t, Y_t) for
///   dX = (a1 X + a2) dt + sqrt((b1 X + b2)^2 + c1) dW,  b1 != 0, c1 > 0,
/// where dF/dz = sqrt((b1 F + b2)^2 + c1), F(0, y) = y, and Y solves the random
/// ODE Y' = G(W_t, Y) with G the Stratonovich-corrected drift over dF/dy.
class DossSaussman {
 public:
  explicit DossSaussman(const DerivedCoeffs& c) : c_(c) {
    if (!(c.noise_variance > 0.0)) fail(ErrorKind::validation, "Doss-Saussman transform needs D != 0");
    if (c.vol_slope == 0.0) fail(ErrorKind::validation, "Doss-Saussman transform needs a nonzero volatility slope");
    abs_b1_ = std::abs(c.vol_slope);
    root_c1_ = std::sqrt(c.noise_variance);
    offset_ = c.vol_intercept / c.vol_slope;
  }

  [[nodiscard]] const DerivedCoeffs& coeffs() const noexcept { return c_; }

  [[nodiscard]] double phase(double y) const noexcept { return std::asinh(abs_b1_ / root_c1_ * (y + offset_)); }

  [[nodiscard]] double transform(double z, double y) const noexcept {
    return root_c1_ / abs_b1_ * std::sinh(abs_b1_ * z + phase(y)) - offset_;
  }
  /// dF/dz in closed form.
  [[nodiscard]] double transform_dz(double z, double y) const noexcept {
    return root_c1_ * std::cosh(abs_b1_ * z + phase(y));
  }
  /// dF/dy in closed form.
  [[nodiscard]] double transform_dy(double z, double y) const noexcept {
    const double s = phase(y);
    return std::cosh(abs_b1_ * z + s) / std::cosh(s);
  }
  /// dF/dz minus its defining right-hand side sqrt((b1 F + b2)^2 + c1).
  [[nodiscard]] double transform_residual(double z, double y) const noexcept {
    const double f = transform(z, y);
    const double v = c_.vol_slope * f + c_.vol_intercept;
    return transform_dz(z, y) - std::sqrt(v * v + c_.noise_variance);
  }

  [[nodiscard]] double ode_rhs(double z, double y) const noexcept {
    const double f = transform(z, y);
    const double strat = c_.drift_slope * f + c_.drift_intercept - 0.5 * c_.vol_slope * (c_.vol_slope * f + c_.vol_intercept);
    return strat / transform_dy(z, y);
  }

  /// Solves Y with classical RK4, `substeps` per grid interval and W linearly
  /// interpolated inside each interval; returns X at every stride-th node.
  [[nodiscard]] std::vector<double> path(double x0, const BrownianPath& bp, std::size_t substeps = 4,
                                         std::size_t stride = 1) const {
    if (substeps < 1) fail(ErrorKind::validation, "ode_substeps must be >= 1");
    if (stride < 1 || bp.n_steps() % stride != 0) fail(ErrorKind::validation, "stride must divide the step count");
    std::vector<double> out;
    out.reserve(bp.n_steps() / stride + 1);
    out.push_back(x0);
    double y = x0;
    double w = 0.0;
    const double h = bp.dt / static_cast<double>(substeps);
    for (std::size_t k = 0; k < bp.n_steps(); ++k) {
      const double dw = bp.increments[k];
      for (std::size_t s = 0; s < substeps; ++s) {
        const double frac0 = static_cast<double>(s) / static_cast<double>(substeps);
        const double frac1 = static_cast<double>(s + 1) / static_cast<double>(substeps);
        const double z0 = w + frac0 * dw;
        const double z1 = w + frac1 * dw;
        const double zm = 0.5 * (z0 + z1);
        const double k1 = ode_rhs(z0, y);
        const double k2 = ode_rhs(zm, y + 0.5 * h * k1);
        const double k3 = ode_rhs(zm, y + 0.5 * h * k2);
        const double k4 = ode_rhs(z1, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      w += dw;
      const double scale = std::max(1.0, std::abs(transform_dz(w, y)));
      if (!(std::abs(transform_residual(w, y)) <= Tolerances::ds_transform * scale)) {
        fail(ErrorKind::numerical, "Doss-Saussman transform failed its defining ODE check");
      }
      if ((k + 1) % stride == 0) out.push_back(transform(w, y));
    }
    return out;
  }

 private:
  DerivedCoeffs c_;
  double abs_b1_ = 0.0;
  double root_c1_ = 0.0;
  double offset_ = 0.0;
};

/// Optimal exploratory state process of a D = 0 model on the given path.
[[nodiscard]] inline std::vector<double> exact_path_D0(const LqModel& model, double x0, const BrownianPath& path,
                                                       std::size_t stride = 1) {
  if (model.dynamics.vol_control != 0.0) fail(ErrorKind::validation, "exact_path_D0 requires D = 0");
  const auto sol = exploratory_solution(model);
  return exact_affine_gbm_path(derived_coeffs(model, sol.policy), x0, path, stride);
}

/// Optimal exploratory state process of a state-independent model with C = 0
/// (constant diffusion |D|/N sqrt(Q^2 + lambda N)).
[[nodiscard]] inline std::vector<double> exact_path_C0(const LqModel& model, double x0, const BrownianPath& path,
                                                       std::size_t stride = 1) {
  if (model.dynamics.vol_state != 0.0) fail(ErrorKind::validation, "exact_path_C0 requires C = 0");
  if (!model.state_independent()) fail(ErrorKind::validation, "exact_path_C0 requires a state-independent reward");
  const auto sol = exploratory_solution(model);
  return exact_ou_path(derived_coeffs(model, sol.policy), x0, path, stride);
}

/// Doss-Saussman path for the optimal exploratory process of a model with
/// D != 0 and nonzero closed-loop volatility slope C + D a.
[[nodiscard]] inline std::vector<double> doss_saussman_path(const LqModel& model, const QuadraticValue& value,
                                                            double x0, const BrownianPath& path,
                                                            std::size_t ode_substeps = 4, std::size_t stride = 1) {
  if (model.dynamics.vol_control == 0.0) fail(ErrorKind::validation, "doss_saussman_path requires D != 0");
  const auto policy = gaussian_policy(model, value.k2, value.k1);
  const auto coeffs = derived_coeffs(model, policy);
  if (coeffs.vol_slope == 0.0) fail(ErrorKind::validation, "doss_saussman_path requires C + D a != 0");
  return DossSaussman(coeffs).path(x0, path, ode_substeps, stride);
}

// ---------------------------------------------------------------------------
// Strong error and convergence
// ---------------------------------------------------------------------------

struct StrongError {
  double max = 0.0;
  double mean = 0.0;
  double rms = 0.0;
};

/// Endpoint deviation |X_a(T) - X_b(T)| over paths flagged in neither batch.
[[nodiscard]] inline StrongError strong_error(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  if (a.grid.dt != b.grid.dt || a.grid.n_steps != b.grid.n_steps) fail(ErrorKind::validation, "grids differ");
  if (a.seed != b.seed) fail(ErrorKind::validation, "seeds differ");
  if (a.n_paths != b.n_paths) fail(ErrorKind::validation, "path counts differ");
  StrongError e;
  std::size_t used = 0;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t p = 0; p < a.n_paths; ++p) {
    if (a.diverged(p) || b.diverged(p)) continue;
    const double d = std::abs(a.endpoint(p) - b.endpoint(p));
    e.max = std::max(e.max, d);
    sum += d;
    sum2 += d * d;
    ++used;
  }
  if (used > 0) {
    e.mean = sum / static_cast<double>(used);
    e.rms = std::sqrt(sum2 / static_cast<double>(used));
  }
  return e;
}

enum class ExactRegime { affine_gbm, ornstein_uhlenbeck, doss_saussman };

[[nodiscard]] inline const char* to_string(ExactRegime r) noexcept {
  switch (r) {
    case ExactRegime::affine_gbm: return "exact_D0";
    case ExactRegime::ornstein_uhlenbeck: return "exact_C0";
    case ExactRegime::doss_saussman: return "doss_saussman";
  }
  return "?";
}

/// Which exact reference applies to the model's optimal exploratory process.
[[nodiscard]] inline ExactRegime exact_regime_for(const LqModel& model) {
  if (model.dynamics.vol_control == 0.0) return ExactRegime::affine_gbm;
  if (model.dynamics.vol_state == 0.0 && model.state_independent()) return ExactRegime::ornstein_uhlenbeck;
  const auto sol = exploratory_solution(model);
  if (derived_coeffs(model, sol.policy).vol_slope != 0.0) return ExactRegime::doss_saussman;
  fail(ErrorKind::numerical, "no exact path for this configuration (D != 0 with zero closed-loop volatility slope "
                             "and a state-dependent reward)");
}

struct ConvergenceRow {
  double dt = 0.0;
  double rms = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct ConvergenceStudy {
  ExactRegime regime = ExactRegime::affine_gbm;
  std::vector<ConvergenceRow> rows;
  double order = 0.0;  // least-squares slope of log rms against log dt
};

[[nodiscard]] inline double empirical_order(const std::vector<ConvergenceRow>& rows) {
  if (rows.size() < 2) return 0.0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& r : rows) {
    const double lx = std::log(r.dt);
    const double ly = std::log(r.rms);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ConvergenceOptions {
  unsigned parallelism = 1;
  std::size_t ode_substeps = 4;
};

/// Euler-Maruyama against the model's exact reference path on shared Brownian
/// increments. The Brownian path lives on the finest step; coarser Euler runs
/// sum its increments.
[[nodiscard]] inline ConvergenceStudy exact_vs_euler(const LqModel& model, double x0, double horizon,
                                                     std::vector<double> dts, std::uint64_t seed,
                                                     std::size_t n_paths, const ConvergenceOptions& opts = {}) {
  if (dts.empty()) fail(ErrorKind::validation, "need at least one step size");
  std::sort(dts.begin(), dts.end(), std::greater<>());
  const double finest = dts.back();
  const PathGrid fine = PathGrid::spanning(horizon, finest);
  std::vector<std::size_t> strides;
  for (double dt : dts) {
    const double ratio = dt / finest;
    const auto s = static_cast<std::size_t>(std::llround(ratio));
    if (s < 1 || std::abs(ratio - static_cast<double>(s)) > 1e-9 * ratio || fine.n_steps % s != 0) {
      fail(ErrorKind::validation, "step sizes must be integer multiples of the finest step");
    }
    strides.push_back(s);
  }
  const auto regime = exact_regime_for(model);
  const auto sol = exploratory_solution(model);
  const auto sde = ClosedLoopSde::exploratory(model, sol.policy);
  std::vector<double> errors(n_paths * dts.size());
  parallel_for(n_paths, opts.parallelism, [&](std::size_t p) {
    const auto bp = make_brownian_path(seed, p, fine);
    double reference = 0.0;
    switch (regime) {
      case ExactRegime::affine_gbm: reference = exact_path_D0(model, x0, bp).back(); break;
      case ExactRegime::ornstein_uhlenbeck: reference = exact_path_C0(model, x0, bp).back(); break;
      case ExactRegime::doss_saussman:
        reference = doss_saussman_path(model, sol.value, x0, bp, opts.ode_substeps).back();
        break;
    }
    for (std::size_t i = 0; i < dts.size(); ++i) {
      errors[p * dts.size() + i] = std::abs(euler_path(sde, x0, bp, strides[i]).back() - reference);
    }
  });
  ConvergenceStudy study;
  study.regime = regime;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    ConvergenceRow row{dts[i], 0.0, 0.0, 0.0};
    for (std::size_t p = 0; p < n_paths; ++p) {
      const double e = errors[p * dts.size() + i];
      row.max = std::max(row.max, e);
      row.mean += e;
      row.rms += e * e;
    }
    row.mean /= static_cast<double>(n_paths);
    row.rms = std::sqrt(row.rms / static_cast<double>(n_paths));
    study.rows.push_back(row);
  }
  study.order = empirical_order(study.rows);
  return study;
}

}  // namespace explq
