#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstring>

#include "explq/closed_form.hpp"
#include "explq/moments.hpp"
#include "explq/sde.hpp"
#include "support.hpp"

using namespace explq;
using explq::testing::ModelGenerator;
using explq::testing::model_ds;
using explq::testing::model_s1;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double ks_statistic_normal(std::vector<double> xs, double mean, double sd) {
  std::sort(xs.begin(), xs.end());
  const boost::math::normal_distribution<double> nd(mean, sd);
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = boost::math::cdf(nd, xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace

TEST(PathGrid, Validation) {
  EXPECT_THROW((PathGrid{0.0, 10}.check()), Error);
  EXPECT_THROW((PathGrid{-1e-3, 10}.check()), Error);
  EXPECT_THROW((PathGrid{1e-3, 0}.check()), Error);
  EXPECT_NO_THROW((PathGrid{1e-3, 1}.check()));
  EXPECT_EQ(PathGrid::spanning(1.0, 1e-3).n_steps, 1000u);
  EXPECT_THROW((void)PathGrid::spanning(1.0, 0.3), Error);
  EXPECT_DOUBLE_EQ((PathGrid{0.01, 250}.horizon()), 2.5);
}

TEST(BrownianPath, LevelsAndCoarsening) {
  const auto bp = make_brownian_path(3, 5, {0.01, 100});
  const auto w = bp.levels();
  EXPECT_EQ(w.front(), 0.0);
  const auto coarse = bp.coarsen(4);
  ASSERT_EQ(coarse.n_steps(), 25u);
  EXPECT_DOUBLE_EQ(coarse.dt, 0.04);
  EXPECT_NEAR(coarse.levels().back(), w.back(), 1e-14);
  EXPECT_EQ(coarse.increments[1], bp.increments[4] + bp.increments[5] + bp.increments[6] + bp.increments[7]);
  EXPECT_THROW((void)bp.coarsen(3), Error);
  EXPECT_TRUE(bitwise_equal(bp.increments, make_brownian_path(3, 5, {0.01, 100}).increments));
}

TEST(Simulate, DegenerateDynamicsStayPut) {
  LqModel m = model_s1();
  m.dynamics = {0.0, 0.0, 0.0, 0.0};
  const auto batch = simulate_exploratory(m, {0.7, -0.2, 0.4}, 1.3, {0.01, 50}, 1, 8);
  for (double x : batch.states) EXPECT_EQ(x, 1.3);

  LqModel c = model_s1();
  c.dynamics = {0.0, 2.5, 0.0, 0.3};
  const auto cl = simulate_classical(c, 0.0, 0.0, -0.4, {0.01, 50}, 1, 8);
  for (double x : cl.states) EXPECT_EQ(x, -0.4);
}

TEST(Simulate, ZeroVarianceCoincidesWithClassicalBitwise) {
  ModelGenerator gen(31);
  for (int i = 0; i < 20; ++i) {
    const LqModel m = gen.valid();
    const double a = gen.uniform(-1, 1), c = gen.uniform(-1, 1);
    const auto ex = simulate_exploratory(m, {a, c, 0.0}, 0.5, {0.01, 200}, 77, 16);
    const auto cl = simulate_classical(m, a, c, 0.5, {0.01, 200}, 77, 16);
    EXPECT_TRUE(bitwise_equal(ex.states, cl.states));
    const auto err = strong_error(ex, cl);
    EXPECT_EQ(err.max, 0.0);
    EXPECT_EQ(err.mean, 0.0);
  }
}

TEST(Simulate, InvariantUnderParallelismAndBatchSize) {
  const LqModel m = model_ds();
  const auto sol = exploratory_solution(m);
  const PathGrid grid{0.01, 100};
  const auto serial = simulate_exploratory(m, sol.policy, 1.0, grid, 5, 40, {1, 1});
  const auto threaded = simulate_exploratory(m, sol.policy, 1.0, grid, 5, 40, {4, 1});
  EXPECT_TRUE(bitwise_equal(serial.states, threaded.states));
  const auto few = simulate_exploratory(m, sol.policy, 1.0, grid, 5, 7, {3, 1});
  for (std::size_t p = 0; p < 7; ++p) {
    for (std::size_t r = 0; r < few.n_records(); ++r) EXPECT_EQ(few.state(p, r), serial.state(p, r));
  }
  const auto strided = simulate_exploratory(m, sol.policy, 1.0, grid, 5, 40, {2, 10});
  ASSERT_EQ(strided.n_records(), 11u);
  for (std::size_t p = 0; p < 40; ++p) {
    EXPECT_EQ(strided.state(p, 0), 1.0);
    EXPECT_EQ(strided.state(p, 3), serial.state(p, 30));
  }
  EXPECT_THROW((void)simulate_exploratory(m, sol.policy, 1.0, grid, 5, 4, {1, 7}), Error);
}

TEST(Simulate, EulerMatchesHandRecursion) {
  const LqModel m = model_ds();
  const auto sol = exploratory_solution(m);
  const auto c = derived_coeffs(m, sol.policy);
  const PathGrid grid{0.02, 50};
  const auto batch = simulate_exploratory(m, sol.policy, 0.8, grid, 9, 3);
  for (std::size_t p = 0; p < 3; ++p) {
    const auto bp = make_brownian_path(9, p, grid);
    double x = 0.8;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
      const double v = c.vol_slope * x + c.vol_intercept;
      x = x + (c.drift_slope * x + c.drift_intercept) * grid.dt + std::sqrt(v * v + c.noise_variance) * bp.increments[k];
    }
    EXPECT_EQ(batch.endpoint(p), x);
  }
}

// The reference model has no noise: every path is the Euler recursion
// x_{k+1} = (1 + a h) x_k, within O(h) of e^{a t}.
TEST(Simulate, ReferenceModelMeanAtOne) {
  const LqModel m = model_s1();
  const auto sol = exploratory_solution(m);
  const double h = 1e-3;
  const auto ex = simulate_exploratory(m, sol.policy, 1.0, {h, 1000}, 1, 100);
  const auto cl = simulate_classical(m, sol.value.k2, 0.0, 1.0, {h, 1000}, 1, 100);
  const auto s = node_stats(ex, ex.n_records() - 1);
  const double euler = std::pow(1.0 + sol.policy.slope * h, 1000);
  EXPECT_NEAR(s.mean, euler, 1e-12);
  EXPECT_LT(s.mean_se, 1e-15);
  const double a = sol.policy.slope;
  EXPECT_NEAR(s.mean, std::exp(a), 0.5 * a * a * h * std::exp(a) * 1.01);
  EXPECT_NEAR(std::exp(a), 0.539, 1e-3);
  EXPECT_NEAR(node_stats(cl, cl.n_records() - 1).mean, euler, 1e-12);
}

TEST(Simulate, DivergenceIsFlaggedNotPropagated) {
  LqModel m = model_s1();
  m.dynamics.drift_state = 60.0;
  const auto batch = simulate_classical(m, 0.0, 0.0, 1.0, {0.01, 100}, 1, 4);
  EXPECT_EQ(batch.n_diverged(), 4u);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_GT(batch.diverged_step[p], 0);
    EXPECT_LT(batch.diverged_step[p], 100);
    EXPECT_TRUE(std::isfinite(batch.endpoint(p)));
  }
  const auto s = node_stats(batch, batch.n_records() - 1);
  EXPECT_EQ(s.n_used, 0u);
}

TEST(StrongError, SelfIsZeroAndMismatchRejected) {
  const LqModel m = model_ds();
  const auto sol = exploratory_solution(m);
  const auto a = simulate_exploratory(m, sol.policy, 1.0, {0.01, 100}, 5, 10);
  const auto e = strong_error(a, a);
  EXPECT_EQ(e.max, 0.0);
  EXPECT_EQ(e.mean, 0.0);
  EXPECT_THROW((void)strong_error(a, simulate_exploratory(m, sol.policy, 1.0, {0.01, 100}, 6, 10)), Error);
  EXPECT_THROW((void)strong_error(a, simulate_exploratory(m, sol.policy, 1.0, {0.02, 50}, 5, 10)), Error);
  EXPECT_THROW((void)strong_error(a, simulate_exploratory(m, sol.policy, 1.0, {0.01, 100}, 5, 11)), Error);
}

TEST(ExactD0, DriftFreeGeometricBrownianMotion) {
  LqModel m = model_s1();
  m.dynamics = {0.0, 0.0, 1.0, 0.0};
  m.discount = 2.0;
  const auto bp = make_brownian_path(4, 0, {1e-3, 1000});
  const auto x = exact_path_D0(m, 1.0, bp);
  const auto w = bp.levels();
  for (std::size_t k = 0; k < x.size(); k += 97) {
    const double t = 1e-3 * static_cast<double>(k);
    EXPECT_NEAR(x[k], std::exp(-0.5 * t + w[k]), 1e-12 * std::exp(-0.5 * t + w[k]));
  }
}

TEST(ExactD0, DeterministicExponential) {
  LqModel m = model_s1();
  m.dynamics = {-0.5, 0.0, 0.0, 0.0};
  const auto bp = make_brownian_path(4, 0, {1e-2, 100});
  const auto x = exact_path_D0(m, 2.0, bp);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], 2.0 * std::exp(-0.5 * 0.01 * k), 1e-13);
}

TEST(ExactD0, AffineForcingMatchesFineEuler) {
  // nonnegative regime: x0 >= 0 with a positive drift intercept
  const DerivedCoeffs c{-0.8, 0.6, 0.5, 0.0, 0.0};
  const auto bp = make_brownian_path(8, 2, {1e-5, 100000});
  const auto exact = exact_affine_gbm_path(c, 0.3, bp);
  const auto euler = euler_path(ClosedLoopSde(c, true), 0.3, bp);
  EXPECT_NEAR(exact.back(), euler.back(), 5e-3);
  EXPECT_GT(*std::min_element(exact.begin(), exact.end()), 0.0);
}

TEST(ExactD0, RejectsUnsolvedRegimeAndWrongModel) {
  const auto bp = make_brownian_path(1, 0, {1e-2, 10});
  EXPECT_THROW((void)exact_affine_gbm_path({-0.5, -0.2, 0.3, 0.0, 0.0}, 1.0, bp), Error);
  EXPECT_THROW((void)exact_affine_gbm_path({-0.5, 0.2, 0.3, 0.0, 0.0}, -1.0, bp), Error);
  EXPECT_NO_THROW((void)exact_affine_gbm_path({-0.5, -0.2, 0.3, 0.0, 0.0}, -1.0, bp));
  EXPECT_THROW((void)exact_path_D0(model_ds(), 1.0, bp), Error);
}

TEST(ExactC0, ScaledBrownianMotionWithoutDrift) {
  LqModel m = explq::testing::model_benchmark();
  m.reward.control_lin = 0.0;  // B Q = 0
  const auto bp = make_brownian_path(2, 1, {1e-2, 100});
  const auto x = exact_path_C0(m, 0.4, bp);
  const auto w = bp.levels();
  const double sigma = std::sqrt(m.temperature / m.reward.control_quad);  // |D|/N sqrt(lambda N)
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], 0.4 + sigma * w[k], 1e-13);
}

TEST(ExactC0, DriftTermForZeroRate) {
  const LqModel m = explq::testing::model_benchmark();  // A = 0, B = 1, Q = 1, N = 2
  const auto bp = make_brownian_path(2, 1, {1e-2, 100});
  const auto x = exact_path_C0(m, 0.0, bp);
  const auto w = bp.levels();
  const double sigma = std::sqrt(1.0 + 2.0) / 2.0;
  EXPECT_NEAR(x.back(), -0.5 * 1.0 + sigma * w.back(), 1e-13);
}

TEST(ExactC0, RejectsStateDependentVolatility) {
  const auto bp = make_brownian_path(1, 0, {1e-2, 10});
  EXPECT_THROW((void)exact_path_C0(model_ds(), 1.0, bp), Error);
  LqModel m = explq::testing::model_benchmark();
  m.reward.state_quad = 1.0;
  EXPECT_THROW((void)exact_path_C0(m, 1.0, bp), Error);
}

TEST(ExactC0, ResidualVarianceSeriesMatchesLongDouble) {
  for (double h : {-0.3, -0.05, -0.0099, -1e-3, -1e-5, 1e-7, 1e-4, 0.0099, 0.02, 0.5}) {
    const long double hl = h;
    const long double r = std::expm1(hl) / hl;
    const long double direct = std::expm1(2.0L * hl) / (2.0L * hl) - r * r;
    // reference to higher order in h for tiny |h|
    const long double series = hl * hl * (1.0L / 12 + hl * (1.0L / 12 + hl * (17.0L / 360 + hl * (7.0L / 360))));
    const long double ref = std::abs(h) < 1e-3 ? series : direct;
    EXPECT_NEAR(ou_step_residual_variance(h, 1.0), static_cast<double>(ref), 1e-9 * static_cast<double>(ref)) << h;
  }
  EXPECT_EQ(ou_step_residual_variance(0.0, 0.1), 0.0);
}

TEST(ExactC0, EndpointDistributionMatchesMomentOracle) {
  LqModel m = explq::testing::model_benchmark();
  m.dynamics.drift_state = -1.0;
  const auto sol = exploratory_solution(m);
  const auto c = derived_coeffs(m, sol.policy);
  const double T = 1.5, x0 = 0.7;
  const std::size_t n = 100000;
  std::vector<double> ends(n);
  for (std::size_t p = 0; p < n; ++p) ends[p] = exact_path_C0(m, x0, make_brownian_path(13, p, {0.25, 6})).back();
  const double mean = mean_curve(c, x0, T);
  const double var = second_moment_curve(c, x0, T, MomentKind::exploratory) - mean * mean;
  EXPECT_LT(ks_statistic_normal(ends, mean, std::sqrt(var)), 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST(ExactC0, StationaryVarianceFromMomentFixedPoint) {
  LqModel m = explq::testing::model_benchmark();
  m.dynamics.drift_state = -1.0;
  m.reward.control_lin = 0.0;
  const auto sol = exploratory_solution(m);
  const auto c = derived_coeffs(m, sol.policy);
  const double D = m.dynamics.vol_control, N = m.reward.control_quad, lambda = m.temperature;
  const double stationary = D * D * lambda / (2.0 * N);
  EXPECT_NEAR(second_moment_curve(c, 0.0, 40.0, MomentKind::exploratory), stationary, 1e-14);
  const std::size_t n = 20000;
  double s2 = 0.0, s4 = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double x = exact_path_C0(m, 0.0, make_brownian_path(17, p, {0.5, 40})).back();
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double m2 = s2 / n;
  const double se = std::sqrt((s4 / n - m2 * m2) / n);
  EXPECT_NEAR(m2, stationary, 4.0 * se);
}

TEST(DossSaussman, TransformProperties) {
  ModelGenerator gen(32);
  for (int i = 0; i < 200; ++i) {
    const DerivedCoeffs c{gen.uniform(-2, 2), gen.uniform(-2, 2), gen.uniform(-2, 2), gen.uniform(-2, 2),
                          gen.uniform(0.01, 2)};
    if (c.vol_slope == 0.0) continue;
    const DossSaussman ds(c);
    for (int j = 0; j < 10; ++j) {
      const double z = gen.uniform(-1.5, 1.5), y = gen.uniform(-3, 3);
      EXPECT_NEAR(ds.transform(0.0, y), y, 1e-12 * std::max(1.0, std::abs(y)));
      const double eps = 1e-6;
      const double fd_z = (ds.transform(z + eps, y) - ds.transform(z - eps, y)) / (2 * eps);
      const double f = ds.transform(z, y);
      const double v = c.vol_slope * f + c.vol_intercept;
      const double rhs = std::sqrt(v * v + c.noise_variance);
      EXPECT_NEAR(fd_z, rhs, 1e-6 * std::max(1.0, rhs));
      const double fd_y = (ds.transform(z, y + eps) - ds.transform(z, y - eps)) / (2 * eps);
      EXPECT_NEAR(fd_y, ds.transform_dy(z, y), 1e-6 * std::max(1.0, std::abs(fd_y)));
      EXPECT_LT(std::abs(ds.transform_residual(z, y)), 1e-8 * std::max(1.0, rhs));
    }
  }
}

TEST(DossSaussman, RejectsUnsupportedConfigurations) {
  EXPECT_THROW((DossSaussman(DerivedCoeffs{0.1, 0.0, 0.5, 0.0, 0.0})), Error);
  EXPECT_THROW((DossSaussman(DerivedCoeffs{0.1, 0.0, 0.0, 0.3, 0.2})), Error);
  const auto bp = make_brownian_path(1, 0, {1e-2, 10});
  LqModel d0 = model_s1();
  EXPECT_THROW((void)doss_saussman_path(d0, exploratory_solution(d0).value, 1.0, bp), Error);
}

TEST(DossSaussman, PathAgreesWithFineEuler) {
  const LqModel m = model_ds();
  const auto sol = exploratory_solution(m);
  const auto sde = ClosedLoopSde::exploratory(m, sol.policy);
  double sum = 0.0;
  for (std::size_t p = 0; p < 20; ++p) {
    const auto bp = make_brownian_path(21, p, {1e-4, 10000});
    const double exact = doss_saussman_path(m, sol.value, 1.0, bp).back();
    const double euler = euler_path(sde, 1.0, bp).back();
    sum += (exact - euler) * (exact - euler);
  }
  EXPECT_LT(std::sqrt(sum / 20.0), 2e-3);
}

TEST(Convergence, OrderForEveryExactRegime) {
  LqModel d0 = model_s1();
  d0.dynamics.vol_state = 0.8;
  d0.discount = 2.0;
  LqModel c0 = explq::testing::model_benchmark();
  c0.dynamics.drift_state = -0.5;
  for (const auto& [model, regime, x0] : {std::tuple{d0, ExactRegime::affine_gbm, 1.0},
                                          std::tuple{c0, ExactRegime::ornstein_uhlenbeck, 0.0},
                                          std::tuple{model_ds(), ExactRegime::doss_saussman, 1.0}}) {
    const auto study = exact_vs_euler(model, x0, 1.0, {1e-1, 1e-2, 1e-3}, 3, 60);
    EXPECT_EQ(study.regime, regime);
    ASSERT_EQ(study.rows.size(), 3u);
    EXPECT_GT(study.rows[0].rms, study.rows[1].rms);
    EXPECT_GT(study.rows[1].rms, study.rows[2].rms);
    EXPECT_GE(study.order, 0.4) << to_string(regime);
  }
}

TEST(Convergence, EmpiricalOrderOfExactPowerLaw) {
  std::vector<ConvergenceRow> rows;
  for (double dt : {1e-1, 1e-2, 1e-3}) rows.push_back({dt, 3.0 * std::pow(dt, 0.75), 0.0, 0.0});
  EXPECT_NEAR(empirical_order(rows), 0.75, 1e-12);
}

// e^{-rho T} E[X_T^2] shrinks along T = 5, 10, 20 when 2 a1 + b1^2 < rho.
TEST(AdmissibilityDecay, DiscountedSecondMomentShrinks) {
  const LqModel m = model_ds();
  const auto sol = exploratory_solution(m);
  ASSERT_TRUE(admissibility_decay(m, derived_coeffs(m, sol.policy)).decays);
  const PathGrid grid{0.01, 2000};
  const auto batch = simulate_exploratory(m, sol.policy, 1.0, grid, 41, 2000, {1, 500});
  double previous = 1.0, previous_se = 0.0;
  for (std::size_t r : {1u, 2u, 4u}) {
    const auto s = node_stats(batch, r);
    const double disc = std::exp(-m.discount * batch.time(r));
    EXPECT_LT(disc * s.second, previous + 3.0 * (disc * s.second_se + previous_se));
    EXPECT_LT(disc * s.second, previous);
    previous = disc * s.second;
    previous_se = disc * s.second_se;
  }
}
