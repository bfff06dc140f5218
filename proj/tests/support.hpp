#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "explq/model.hpp"

namespace explq::testing {

/// Reference model S1: controlled drift, no noise, unit quadratic costs.
inline LqModel model_s1() {
  LqModel m;
  m.dynamics = {0.0, 1.0, 0.0, 0.0};
  m.reward = {1.0, 1.0, 0.0, 0.0, 0.0};
  m.discount = 1.0;
  m.temperature = 0.2;
  return m;
}

/// State-independent benchmark (N=2, Q=1, rho=0.5, lambda=1).
inline LqModel model_benchmark() {
  LqModel m;
  m.dynamics = {0.0, 1.0, 0.0, 1.0};
  m.reward = {0.0, 2.0, 0.0, 0.0, 1.0};
  m.discount = 0.5;
  m.temperature = 1.0;
  return m;
}

/// Model with control-dependent noise and a nonzero closed-loop volatility slope.
inline LqModel model_ds() {
  LqModel m;
  m.dynamics = {0.0, 1.0, 0.5, 1.0};
  m.reward = {1.0, 2.0, 0.0, 0.0, 0.0};
  m.discount = 3.0;
  m.temperature = 0.2;
  return m;
}

/// Random models satisfying every standing assumption, with the discount a
/// random margin above the assumption bound.
class ModelGenerator {
 public:
  explicit ModelGenerator(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  LqModel valid(double min_margin = 0.05, double max_margin = 2.0) {
    LqModel m;
    m.dynamics = {uniform(-1.0, 1.0), uniform(-2.0, 2.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
    const double M = uniform(0.1, 3.0);
    const double N = uniform(0.2, 3.0);
    const double R = uniform(-0.95, 0.95) * std::sqrt(M * N);
    m.reward = {M, N, R, uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
    m.temperature = std::exp(uniform(std::log(1e-3), std::log(3.0)));
    m.discount = 1.0;
    m.discount = std::max(0.0, assumption_bound(m)) + uniform(min_margin, max_margin);
    return m;
  }

  /// Valid model with the given (lambda, rho), by rejection.
  LqModel valid_with(double temperature, double discount) {
    for (;;) {
      LqModel m = valid();
      m.temperature = temperature;
      m.discount = discount;
      if (validate(m).ok()) return m;
    }
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace explq::testing
