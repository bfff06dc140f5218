#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "closed_form.hpp"
#include "constants.hpp"
#include "model.hpp"

namespace explq {

enum class MomentKind { exploratory, classical };

namespace detail {

// (e^z - 1) / z
[[nodiscard]] inline double phi1(double z) noexcept {
  if (std::abs(z) < 1e-5) return 1.0 + z * (0.5 + z * (1.0 / 6 + z / 24));
  return std::expm1(z) / z;
}

// (e^z - 1 - z) / z^2
[[nodiscard]] inline double phi2(double z) noexcept {
  if (std::abs(z) < 1e-3) return 0.5 + z * (1.0 / 6 + z * (1.0 / 24 + z * (1.0 / 120 + z / 720)));
  return (std::expm1(z) - z) / (z * z);
}

}  // namespace detail

/// E[X_t] for dX = (a1 X + a2) dt + ... ; the classical process shares it.
[[nodiscard]] inline double mean_curve(const DerivedCoeffs& c, double x0, double t) noexcept {
  const double a1 = c.drift_slope;
  return x0 * std::exp(a1 * t) + c.drift_intercept * t * detail::phi1(a1 * t);
}

/// Coefficients of the second-moment ODE m' = growth m + coupling n + source.
struct SecondMomentOde {
  double growth = 0.0;
  double coupling = 0.0;
  double source = 0.0;
};

[[nodiscard]] inline SecondMomentOde second_moment_ode(const DerivedCoeffs& c, MomentKind kind) noexcept {
  const double b1 = c.vol_slope, b2 = c.vol_intercept;
  SecondMomentOde ode;
  ode.growth = 2.0 * c.drift_slope + b1 * b1;
  ode.coupling = 2.0 * (c.drift_intercept + b1 * b2);
  ode.source = b2 * b2 + (kind == MomentKind::exploratory ? c.noise_variance : 0.0);
  return ode;
}

/// Closed-form branch labels, keyed on which of a1, b1^2, a1 + b1^2 and
/// 2 a1 + b1^2 vanish.
enum class MomentCase : char { a = 'a', b = 'b', c = 'c', d = 'd', e = 'e' };

[[nodiscard]] inline MomentCase moment_case(const DerivedCoeffs& c) noexcept {
  const double tol = Tolerances::moment_case;
  const double a1 = c.drift_slope, q = c.vol_slope * c.vol_slope;
  if (std::abs(a1) <= tol) return q <= tol ? MomentCase::a : MomentCase::b;
  if (std::abs(a1 + q) <= tol) return MomentCase::c;
  if (std::abs(2.0 * a1 + q) <= tol) return MomentCase::d;
  return MomentCase::e;
}

/// True when a defining quantity is small but not small enough to select a
/// degenerate branch; the closed forms lose accuracy there.
[[nodiscard]] inline bool moment_near_boundary(const DerivedCoeffs& c) noexcept {
  const double a1 = c.drift_slope, q = c.vol_slope * c.vol_slope;
  const auto in_band = [](double v) {
    const double av = std::abs(v);
    return av > Tolerances::moment_case && av < Tolerances::moment_near_boundary;
  };
  if (std::abs(a1) <= Tolerances::moment_case) return in_band(q);
  return in_band(a1) || in_band(a1 + q) || in_band(2.0 * a1 + q);
}

/// Evaluates one closed-form branch regardless of dispatch (each branch
/// treats its vanishing quantities as exactly zero).
[[nodiscard]] inline double second_moment_case(const DerivedCoeffs& c, double x0, double t, MomentKind kind,
                                               MomentCase branch) {
  const auto [growth, coupling, source] = second_moment_ode(c, kind);
  const double a1 = c.drift_slope, a2 = c.drift_intercept;
  const double x2 = x0 * x0;
  switch (branch) {
    case MomentCase::a:
      return x2 + (coupling * x0 + source) * t + 0.5 * coupling * a2 * t * t;
    case MomentCase::b: {
      const double z = growth * t;
      return x2 * std::exp(z) + (coupling * x0 + source) * t * detail::phi1(z) + coupling * a2 * t * t * detail::phi2(z);
    }
    default: break;
  }
  const double tail = -a2 / a1;      // stationary mean
  const double transient = x0 - tail;  // n = transient e^{a1 t} + tail
  const double forced = coupling * tail + source;
  switch (branch) {
    case MomentCase::c:
      return x2 * std::exp(a1 * t) + forced * t * detail::phi1(a1 * t) + coupling * transient * t * std::exp(a1 * t);
    case MomentCase::d:
      return x2 + forced * t + coupling * transient * t * detail::phi1(a1 * t);
    default: {
      const double eg = std::exp(growth * t);
      return x2 * eg + forced * t * detail::phi1(growth * t) +
             coupling * transient * t * std::exp(a1 * t) * detail::phi1((growth - a1) * t);
    }
  }
}

/// Classical RK4 on the coupled (n, m) system. Uses at least 2048 steps, more
/// when the fastest rate times the step would exceed 1e-2.
[[nodiscard]] inline double second_moment_rk4(const DerivedCoeffs& c, double x0, double t, MomentKind kind) {
  if (t == 0.0) return x0 * x0;
  const auto ode = second_moment_ode(c, kind);
  const double a1 = c.drift_slope, a2 = c.drift_intercept;
  const double rate = std::max(std::abs(a1), std::abs(ode.growth));
  const auto steps = static_cast<std::size_t>(std::max(2048.0, std::ceil(rate * std::abs(t) / 1e-2)));
  const double h = t / static_cast<double>(steps);
  double n = x0, m = x0 * x0;
  const auto dn = [&](double nv) { return a1 * nv + a2; };
  const auto dm = [&](double nv, double mv) { return ode.growth * mv + ode.coupling * nv + ode.source; };
  for (std::size_t i = 0; i < steps; ++i) {
    const double kn1 = dn(n), km1 = dm(n, m);
    const double kn2 = dn(n + 0.5 * h * kn1), km2 = dm(n + 0.5 * h * kn1, m + 0.5 * h * km1);
    const double kn3 = dn(n + 0.5 * h * kn2), km3 = dm(n + 0.5 * h * kn2, m + 0.5 * h * km2);
    const double kn4 = dn(n + h * kn3), km4 = dm(n + h * kn3, m + h * km3);
    n += h / 6.0 * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4);
    m += h / 6.0 * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
  }
  return m;
}

/// E[X_t^2] (exploratory) or E[x_t^2] (classical).
[[nodiscard]] inline double second_moment_curve(const DerivedCoeffs& c, double x0, double t, MomentKind kind) {
  if (moment_near_boundary(c)) return second_moment_rk4(c, x0, t, kind);
  return second_moment_case(c, x0, t, kind, moment_case(c));
}

struct MomentPoint {
  double t = 0.0;
  double n = 0.0;
  double m = 0.0;
  double m_hat = 0.0;
};

struct MomentCurves {
  MomentCase case_tag = MomentCase::e;
  bool integrated = false;  // near a branch boundary, so values come from RK4
  std::vector<MomentPoint> points;
};

[[nodiscard]] inline MomentCurves tabulate_moments(const DerivedCoeffs& c, double x0, const std::vector<double>& times) {
  MomentCurves curves;
  curves.case_tag = moment_case(c);
  curves.integrated = moment_near_boundary(c);
  curves.points.reserve(times.size());
  for (double t : times) {
    curves.points.push_back({t, mean_curve(c, x0, t), second_moment_curve(c, x0, t, MomentKind::exploratory),
                             second_moment_curve(c, x0, t, MomentKind::classical)});
  }
  return curves;
}

struct DecayCheck {
  double exponent = 0.0;  // 2 a1 + b1^2 - rho from the closed-loop coefficients
  double expanded = 0.0;  // same quantity expanded in the model parameters
  bool decays = false;
};

/// Growth exponent of e^{-rho t} E[X_t^2] under the optimal Gaussian policy.
[[nodiscard]] inline DecayCheck admissibility_decay(const LqModel& model, const DerivedCoeffs& c) {
  DecayCheck out;
  out.exponent = 2.0 * c.drift_slope + c.vol_slope * c.vol_slope - model.discount;
  const auto& [A, B, C, D] = model.dynamics;
  const double N = model.reward.control_quad, R = model.reward.cross;
  const double k2 = solve_k2(model);
  const double beta = B + C * D;
  const double d = N - k2 * D * D;
  out.expanded = 2.0 * A + C * C - model.discount +
                 (k2 * (2.0 * N - k2 * D * D) * beta * beta - 2.0 * N * R * beta + D * D * R * R) / (d * d);
  out.decays = out.exponent < 0.0;
  return out;
}

}  // namespace explq
