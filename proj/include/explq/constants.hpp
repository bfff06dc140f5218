#pragma once

namespace explq {

/// Numerical thresholds shared across modules.
struct Tolerances {
  /// Absolute slack used whenever a computed quantity is compared to a bound.
  static constexpr double bound = 1e-12;
  /// A k1 denominator closer to zero than this is reported as degenerate.
  static constexpr double degenerate_denominator = 1e-12;
  /// |X| above this marks a simulated path as diverged.
  static constexpr double divergence = 1e12;
  /// Exact-case detection for the second-moment closed forms.
  static constexpr double moment_case = 1e-10;
  /// Inputs this close to a case boundary go to the RK4 integrator instead.
  static constexpr double moment_near_boundary = 1e-5;
  /// Doss-Saussman transform self-check.
  static constexpr double ds_transform = 1e-8;
};

}  // namespace explq
