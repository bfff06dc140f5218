#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "constants.hpp"
#include "error.hpp"

namespace explq {

/// Linear state dynamics dX = (A X + B u) dt + (C X + D u) dW.
struct Dynamics {
  double drift_state = 0.0;    // A
  double drift_control = 0.0;  // B
  double vol_state = 0.0;      // C
  double vol_control = 0.0;    // D
};

/// Running reward r(x,u) = -(M/2 x^2 + R x u + N/2 u^2 + P x + Q u).
struct Reward {
  double state_quad = 0.0;    // M >= 0
  double control_quad = 1.0;  // N > 0
  double cross = 0.0;         // R
  double state_lin = 0.0;     // P
  double control_lin = 0.0;   // Q
};

/// Scalar entropy-regularized LQ problem: dynamics, reward, discount rate and
/// exploration temperature.
struct LqModel {
  Dynamics dynamics;
  Reward reward;
  double discount = 1.0;     // rho > 0
  double temperature = 1.0;  // lambda > 0

  /// M = R = P = 0: the reward does not see the state.
  [[nodiscard]] bool state_independent() const noexcept {
    return reward.state_quad == 0.0 && reward.cross == 0.0 && reward.state_lin == 0.0;
  }

  [[nodiscard]] double reward_at(double x, double u) const noexcept {
    const auto& [M, N, R, P, Q] = reward;
    return -(0.5 * M * x * x + R * x * u + 0.5 * N * u * u + P * x + Q * u);
  }
  [[nodiscard]] double drift(double x, double u) const noexcept {
    return dynamics.drift_state * x + dynamics.drift_control * u;
  }
  [[nodiscard]] double volatility(double x, double u) const noexcept {
    return dynamics.vol_state * x + dynamics.vol_control * u;
  }
};

/// Feedback density N(. | slope*x + intercept, variance). variance == 0 encodes
/// the deterministic feedback u(x) = slope*x + intercept.
struct AffineGaussianPolicy {
  double slope = 0.0;
  double intercept = 0.0;
  double variance = 0.0;

  [[nodiscard]] double mean(double x) const noexcept { return slope * x + intercept; }
  [[nodiscard]] bool deterministic() const noexcept { return variance == 0.0; }
};

/// Coefficients of the closed-loop state SDE under an affine Gaussian policy:
///   dX = (drift_slope X + drift_intercept) dt
///        + sqrt((vol_slope X + vol_intercept)^2 + noise_variance) dW.
struct DerivedCoeffs {
  double drift_slope = 0.0;      // A + B a
  double drift_intercept = 0.0;  // B c
  double vol_slope = 0.0;        // C + D a
  double vol_intercept = 0.0;    // D c
  double noise_variance = 0.0;   // D^2 s^2
};

[[nodiscard]] inline DerivedCoeffs derived_coeffs(const LqModel& model, const AffineGaussianPolicy& policy) {
  if (!(policy.variance >= 0.0)) fail(ErrorKind::validation, "policy variance must be >= 0");
  const auto& [A, B, C, D] = model.dynamics;
  return {A + B * policy.slope, B * policy.intercept, C + D * policy.slope, D * policy.intercept,
          D * D * policy.variance};
}

/// Smallest discount rate for which the infinite-horizon problem is well posed:
/// 2A + C^2 + max((D^2 R^2 - 2 N R (B + C D)) / N, 0).
[[nodiscard]] inline double assumption_bound(const LqModel& model) {
  const auto& [A, B, C, D] = model.dynamics;
  const double N = model.reward.control_quad;
  const double R = model.reward.cross;
  if (!(N > 0.0)) fail(ErrorKind::validation, "assumption_bound requires N>0");
  const double excess = (D * D * R * R - 2.0 * N * R * (B + C * D)) / N;
  return 2.0 * A + C * C + std::max(excess, 0.0);
}

struct Violation {
  std::string condition;
  std::string detail;
};

struct ValidationResult {
  LqModel model;
  std::vector<Violation> violations;

  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
  [[nodiscard]] std::string summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
      if (i) os << "; ";
      os << violations[i].condition << " (" << violations[i].detail << ")";
    }
    return os.str();
  }
};

namespace detail {
inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace detail

/// Checks the standing assumptions. The state-independent configuration
/// M = R = 0 is admitted as the boundary of R^2 < MN; Assumption 1 on the
/// discount rate is only required when M > 0.
[[nodiscard]] inline ValidationResult validate(const LqModel& model) {
  using detail::fmt_num;
  ValidationResult out{model, {}};
  const auto& [M, N, R, P, Q] = model.reward;
  const auto add = [&](std::string cond, std::string detail) {
    out.violations.push_back({std::move(cond), std::move(detail)});
  };
  const auto finite = [](double v) { return std::isfinite(v); };
  const auto& dyn = model.dynamics;
  for (double v : {dyn.drift_state, dyn.drift_control, dyn.vol_state, dyn.vol_control, M, N, R, P, Q,
                   model.discount, model.temperature}) {
    if (!finite(v)) {
      add("finite", "all coefficients must be finite");
      return out;
    }
  }
  if (!(N > 0.0)) add("N>0", "N=" + fmt_num(N));
  if (!(M >= 0.0)) add("M>=0", "M=" + fmt_num(M));
  if (!(model.discount > 0.0)) add("rho>0", "rho=" + fmt_num(model.discount));
  if (!(model.temperature > 0.0)) add("lambda>0", "lambda=" + fmt_num(model.temperature));
  const bool boundary = (M == 0.0 && R == 0.0);
  if (!boundary && !(R * R < M * N)) {
    add("R^2<MN", "R^2=" + fmt_num(R * R) + ", MN=" + fmt_num(M * N));
  }
  if (N > 0.0 && M > 0.0) {
    const double bound = assumption_bound(model);
    if (!(model.discount > bound + Tolerances::bound)) {
      add("rho>assumption_bound", "rho=" + fmt_num(model.discount) + ", bound=" + fmt_num(bound));
    }
  }
  return out;
}

/// Throws ErrorKind::validation naming every violated condition.
inline const LqModel& require_valid(const LqModel& model) {
  const auto result = validate(model);
  if (!result.ok()) fail(ErrorKind::validation, "model violates: " + result.summary());
  return model;
}

}  // namespace explq
