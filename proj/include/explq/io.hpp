#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "closed_form.hpp"
#include "error.hpp"
#include "moments.hpp"
#include "policy_eval.hpp"
#include "sde.hpp"

namespace explq::io {

using Json = nlohmann::ordered_json;

/// Shortest round-trip representation, so files are byte-stable.
[[nodiscard]] inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::config, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::config, "failed writing " + path.string());
}

[[nodiscard]] inline Json model_json(const LqModel& m) {
  return Json{{"A", m.dynamics.drift_state}, {"B", m.dynamics.drift_control}, {"C", m.dynamics.vol_state},
              {"D", m.dynamics.vol_control}, {"M", m.reward.state_quad},    {"N", m.reward.control_quad},
              {"R", m.reward.cross},         {"P", m.reward.state_lin},     {"Q", m.reward.control_lin},
              {"rho", m.discount},           {"lambda", m.temperature}};
}

/// {k2, k1, k0, alpha0, policy{slope, intercept, variance}, cost, assumption_bound, verified}
[[nodiscard]] inline Json solution_json(const LqModel& model, const ExploratorySolution& sol,
                                        const ClassicalSolution& cl, bool verified) {
  Json j;
  j["k2"] = sol.value.k2;
  j["k1"] = sol.value.k1;
  j["k0"] = sol.value.k0;
  j["alpha0"] = cl.alpha0;
  j["policy"] = Json{{"slope", sol.policy.slope}, {"intercept", sol.policy.intercept},
                     {"variance", sol.policy.variance}};
  j["cost"] = exploration_cost(model);
  j["assumption_bound"] = assumption_bound(model);
  j["verified"] = verified;
  return j;
}

/// {value, std_error, truncation_bound, n_paths, dt, T, seed}
[[nodiscard]] inline Json estimate_json(const ValueEstimate& e) {
  return Json{{"value", e.mean},     {"std_error", e.std_error}, {"truncation_bound", e.truncation_bound},
              {"n_paths", e.n_paths}, {"dt", e.dt},               {"T", e.horizon},
              {"seed", e.seed}};
}

/// t,path_id,x at the recorded nodes.
inline void write_trajectories_csv(std::ostream& os, const TrajectoryBatch& b) {
  os << "t,path_id,x\n";
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    for (std::size_t r = 0; r < b.n_records(); ++r) os << num(b.time(r)) << ',' << p << ',' << num(b.state(p, r)) << '\n';
  }
}

/// {n_paths, diverged, mean_T, m2_T}; statistics exclude diverged paths.
[[nodiscard]] inline Json batch_summary_json(const TrajectoryBatch& b) {
  const auto s = node_stats(b, b.n_records() - 1);
  return Json{{"n_paths", b.n_paths}, {"diverged", b.n_diverged()}, {"mean_T", s.mean}, {"m2_T", s.second}};
}

inline void write_moments_csv(std::ostream& os, const MomentCurves& c) {
  os << "t,n,m,m_hat,case_tag\n";
  for (const auto& p : c.points) {
    os << num(p.t) << ',' << num(p.n) << ',' << num(p.m) << ',' << num(p.m_hat) << ','
       << static_cast<char>(c.case_tag) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, double probe_x) {
  os << "lambda,variance,value_gap,cost,mean_at_probe,probe_x\n";
  for (const auto& r : rows) {
    os << num(r.temperature) << ',' << num(r.variance) << ',' << num(r.value_gap) << ',' << num(r.cost) << ','
       << num(r.mean_at_probe) << ',' << num(probe_x) << '\n';
  }
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceStudy& s) {
  os << "dt,rms_error,max_error,mean_error\n";
  for (const auto& r : s.rows) os << num(r.dt) << ',' << num(r.rms) << ',' << num(r.max) << ',' << num(r.mean) << '\n';
}

struct ResidualRow {
  double x = 0.0;
  double exploratory = 0.0;
  double classical = 0.0;
};

inline void write_residual_csv(std::ostream& os, const std::vector<ResidualRow>& rows) {
  os << "x,residual_exploratory,residual_classical\n";
  for (const auto& r : rows) os << num(r.x) << ',' << num(r.exploratory) << ',' << num(r.classical) << '\n';
}

}  // namespace explq::io
