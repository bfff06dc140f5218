#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "closed_form.hpp"
#include "config.hpp"
#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "moments.hpp"
#include "policy_eval.hpp"
#include "sde.hpp"

namespace explq {

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"solve", "residual", "simulate", "evaluate",
                                                 "cost",  "sweep",    "exact-vs-euler", "moments"};
  return names;
}

[[nodiscard]] inline bool is_stochastic(const std::string& command) {
  return command == "simulate" || command == "evaluate" || command == "cost" || command == "exact-vs-euler" ||
         command == "moments";
}

struct SimSettings {
  double dt = 1e-3;
  std::size_t n_steps = 1000;
  std::size_t n_paths = 1000;
  double x0 = 1.0;
  std::optional<std::uint64_t> seed;
  unsigned parallelism = 1;
  std::size_t record_stride = 1;
  std::string kind = "exploratory";
  std::vector<double> dts = {1e-2, 1e-3, 1e-4};
  std::size_t ode_substeps = 4;
};

struct RunSpec {
  std::string command;
  LqModel model;
  bool override_assumptions = false;
  SimSettings sim;
  std::vector<double> lambdas = {1e-1, 1e-2, 1e-3};
  double probe_x = 1.0;
  double residual_x_min = -10.0;
  double residual_x_max = 10.0;
  std::size_t residual_points = 41;
  std::vector<double> moment_times = {0.0, 0.5, 1.0, 2.0};
  std::filesystem::path out_dir = ".";
};

inline const std::set<std::string>& run_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k(model_config_keys().begin(), model_config_keys().end());
    for (const char* s : {"sim.dt", "sim.n_steps", "sim.n_paths", "sim.x0", "sim.seed", "sim.parallelism",
                          "sim.record_stride", "sim.kind", "sim.dts", "sim.ode_substeps", "sweep.lambdas",
                          "sweep.probe_x", "residual.x_min", "residual.x_max", "residual.points",
                          "moments.times"}) {
      k.insert(s);
    }
    return k;
  }();
  return keys;
}

/// Builds a RunSpec from a parsed config; command-line values (seed,
/// parallelism) take precedence over the sim.* keys.
[[nodiscard]] inline RunSpec make_run_spec(const FlatConfig& cfg, const std::string& command,
                                           std::optional<std::uint64_t> seed, std::optional<unsigned> parallelism,
                                           const std::filesystem::path& out_dir, bool override_assumptions) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    fail(ErrorKind::config, "unknown command " + command);
  }
  cfg.require_known(run_config_keys());
  RunSpec spec;
  spec.command = command;
  spec.model = model_from_config(cfg);
  spec.override_assumptions = override_assumptions;
  spec.out_dir = out_dir;
  auto& sim = spec.sim;
  sim.dt = cfg.number_or("sim.dt", sim.dt);
  sim.n_steps = cfg.integer_or("sim.n_steps", sim.n_steps);
  sim.n_paths = cfg.integer_or("sim.n_paths", sim.n_paths);
  sim.x0 = cfg.number_or("sim.x0", sim.x0);
  if (cfg.has("sim.seed")) sim.seed = cfg.integer("sim.seed");
  if (seed) sim.seed = seed;
  sim.parallelism = static_cast<unsigned>(cfg.integer_or("sim.parallelism", sim.parallelism));
  if (parallelism) sim.parallelism = *parallelism;
  if (sim.parallelism < 1) fail(ErrorKind::config, "parallelism must be >= 1");
  sim.record_stride = cfg.integer_or("sim.record_stride", sim.record_stride);
  sim.kind = cfg.text_or("sim.kind", sim.kind);
  if (sim.kind != "exploratory" && sim.kind != "classical") {
    fail(ErrorKind::config, "sim.kind must be exploratory or classical");
  }
  if (cfg.has("sim.dts")) sim.dts = cfg.number_list("sim.dts");
  sim.ode_substeps = cfg.integer_or("sim.ode_substeps", sim.ode_substeps);
  if (cfg.has("sweep.lambdas")) spec.lambdas = cfg.number_list("sweep.lambdas");
  spec.probe_x = cfg.number_or("sweep.probe_x", spec.probe_x);
  spec.residual_x_min = cfg.number_or("residual.x_min", spec.residual_x_min);
  spec.residual_x_max = cfg.number_or("residual.x_max", spec.residual_x_max);
  spec.residual_points = cfg.integer_or("residual.points", spec.residual_points);
  if (spec.residual_points < 2) fail(ErrorKind::config, "residual.points must be >= 2");
  if (cfg.has("moments.times")) spec.moment_times = cfg.number_list("moments.times");
  if (is_stochastic(command) && !sim.seed) {
    fail(ErrorKind::config, "command " + command + " needs a seed (--seed or sim.seed)");
  }
  return spec;
}

/// One Monte Carlo comparison for the report.
struct McComparison {
  std::string label;
  ValueEstimate estimate;
  double target = 0.0;

  [[nodiscard]] double tolerance() const noexcept {
    return 3.0 * estimate.std_error + estimate.truncation_bound + Tolerances::bound;
  }
  [[nodiscard]] bool pass() const noexcept { return std::abs(estimate.mean - target) <= tolerance(); }
};

/// Fixed-order plain-text summary.
[[nodiscard]] inline std::string emit_report(const LqModel& model, const ValidationResult& validation,
                                             const ExploratorySolution& sol, const ClassicalSolution& cl,
                                             const std::vector<McComparison>& comparisons) {
  using io::num;
  std::ostringstream os;
  if (!validation.ok()) os << "UNVERIFIED (assumption violated): " << validation.summary() << "\n";
  const auto& d = model.dynamics;
  const auto& r = model.reward;
  os << "model: A=" << num(d.drift_state) << " B=" << num(d.drift_control) << " C=" << num(d.vol_state)
     << " D=" << num(d.vol_control) << " M=" << num(r.state_quad) << " N=" << num(r.control_quad)
     << " R=" << num(r.cross) << " P=" << num(r.state_lin) << " Q=" << num(r.control_lin)
     << " rho=" << num(model.discount) << " lambda=" << num(model.temperature) << "\n";
  os << "assumption bound: " << num(assumption_bound(model)) << " vs rho " << num(model.discount) << "\n";
  os << "value: k2=" << num(sol.value.k2) << " k1=" << num(sol.value.k1) << " k0=" << num(sol.value.k0) << "\n";
  os << "policy: slope=" << num(sol.policy.slope) << " intercept=" << num(sol.policy.intercept)
     << " variance=" << num(sol.policy.variance) << "\n";
  os << "classical alpha0: " << num(cl.alpha0) << "\n";
  os << "exploration cost lambda/(2 rho): " << num(exploration_cost(model)) << "\n";
  if (!comparisons.empty()) {
    os << "monte carlo:\n";
    for (const auto& c : comparisons) {
      os << "  " << c.label << ": estimate=" << num(c.estimate.mean) << " std_error=" << num(c.estimate.std_error)
         << " truncation_bound=" << num(c.estimate.truncation_bound) << " target=" << num(c.target)
         << " abs_diff=" << num(std::abs(c.estimate.mean - c.target)) << " tolerance=" << num(c.tolerance())
         << " " << (c.pass() ? "PASS" : "FAIL") << "\n";
    }
  }
  return os.str();
}

/// Executes one command, writing artifacts into spec.out_dir. Throws Error on
/// failure; see run_main for the exit-code mapping.
inline void execute(const RunSpec& spec) {
  namespace fs = std::filesystem;
  const auto validation = validate(spec.model);
  if (!validation.ok() && !spec.override_assumptions) {
    fail(ErrorKind::validation, "model violates: " + validation.summary());
  }
  if (!(spec.model.reward.control_quad > 0.0)) fail(ErrorKind::validation, "model violates: N>0");
  const LqModel& model = spec.model;
  const auto sol = exploratory_solution(model);
  const auto cl = classical_solution(model);
  const auto& sim = spec.sim;
  const fs::path out = spec.out_dir;
  fs::create_directories(out);
  std::vector<McComparison> comparisons;
  const auto grid = [&] { return PathGrid{sim.dt, sim.n_steps}; };
  EvalOptions eval_opts;
  eval_opts.parallelism = sim.parallelism;

  const std::string& cmd = spec.command;
  if (cmd == "solve") {
    io::write_text(out / "solution.json", io::solution_json(model, sol, cl, validation.ok()).dump(2) + "\n");
  } else if (cmd == "residual") {
    std::vector<io::ResidualRow> rows;
    const auto n = spec.residual_points;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = spec.residual_x_min +
                       (spec.residual_x_max - spec.residual_x_min) * static_cast<double>(i) / static_cast<double>(n - 1);
      rows.push_back({x, hjb_residual(model, sol.value, x, HjbKind::exploratory),
                      hjb_residual(model, cl.value(), x, HjbKind::classical)});
    }
    std::ostringstream os;
    io::write_residual_csv(os, rows);
    io::write_text(out / "residual.csv", os.str());
  } else if (cmd == "simulate") {
    SimOptions opts{sim.parallelism, sim.record_stride};
    const auto batch =
        sim.kind == "classical"
            ? simulate_classical(model, cl.feedback_slope, cl.feedback_intercept, sim.x0, grid(), *sim.seed,
                                 sim.n_paths, opts)
            : simulate_exploratory(model, sol.policy, sim.x0, grid(), *sim.seed, sim.n_paths, opts);
    std::ostringstream os;
    io::write_trajectories_csv(os, batch);
    io::write_text(out / "trajectories.csv", os.str());
    io::write_text(out / "summary.json", io::batch_summary_json(batch).dump(2) + "\n");
  } else if (cmd == "evaluate") {
    const auto est = mc_value(model, sol.policy, sim.x0, grid(), *sim.seed, sim.n_paths, eval_opts);
    const McComparison cmp{"value", est, sol.value(sim.x0)};
    auto j = io::estimate_json(est);
    j["closed_form"] = cmp.target;
    j["abs_diff"] = std::abs(est.mean - cmp.target);
    j["tolerance"] = cmp.tolerance();
    j["pass"] = cmp.pass();
    io::write_text(out / "estimate.json", j.dump(2) + "\n");
    comparisons.push_back(cmp);
  } else if (cmd == "cost") {
    const auto est = mc_exploration_cost(model, sim.x0, grid(), *sim.seed, sim.n_paths, eval_opts);
    const McComparison cmp{"exploration cost", est, exploration_cost(model)};
    io::Json j;
    j["closed_form"] = exploration_cost(model);
    j["decomposition"] = exploration_cost_decomposition(model, sim.x0);
    j["monte_carlo"] = io::estimate_json(est);
    j["abs_diff"] = std::abs(est.mean - cmp.target);
    j["tolerance"] = cmp.tolerance();
    j["pass"] = cmp.pass();
    io::write_text(out / "cost.json", j.dump(2) + "\n");
    comparisons.push_back(cmp);
  } else if (cmd == "sweep") {
    std::ostringstream os;
    io::write_sweep_csv(os, lambda_sweep(model, spec.lambdas, spec.probe_x), spec.probe_x);
    io::write_text(out / "sweep.csv", os.str());
  } else if (cmd == "exact-vs-euler") {
    const double horizon = grid().horizon();
    const auto study = exact_vs_euler(model, sim.x0, horizon, sim.dts, *sim.seed, sim.n_paths,
                                      {sim.parallelism, sim.ode_substeps});
    std::ostringstream os;
    io::write_convergence_csv(os, study);
    io::write_text(out / "convergence.csv", os.str());
    const io::Json j{{"regime", to_string(study.regime)}, {"empirical_order", study.order}, {"T", horizon},
                     {"n_paths", sim.n_paths}, {"seed", *sim.seed}};
    io::write_text(out / "convergence.json", j.dump(2) + "\n");
  } else if (cmd == "moments") {
    const auto coeffs = derived_coeffs(model, sol.policy);
    const auto curves = tabulate_moments(coeffs, sim.x0, spec.moment_times);
    std::ostringstream os;
    io::write_moments_csv(os, curves);
    io::write_text(out / "moments.csv", os.str());
    // Monte Carlo at the same times, on a grid of step sim.dt.
    double t_max = 0.0;
    for (double t : spec.moment_times) t_max = std::max(t_max, t);
    std::ostringstream mc;
    mc << "t,mc_mean,mc_mean_se,mc_m2,mc_m2_se,n,m\n";
    if (t_max > 0.0) {
      const auto g = PathGrid::spanning(t_max, sim.dt);
      const auto batch = simulate_exploratory(model, sol.policy, sim.x0, g, *sim.seed, sim.n_paths,
                                              {sim.parallelism, 1});
      for (const auto& p : curves.points) {
        const double ratio = p.t / sim.dt;
        const auto k = static_cast<std::size_t>(std::llround(ratio));
        if (std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio)) {
          fail(ErrorKind::config, "moments.times must be multiples of sim.dt");
        }
        const auto s = node_stats(batch, k);
        mc << io::num(p.t) << ',' << io::num(s.mean) << ',' << io::num(s.mean_se) << ',' << io::num(s.second) << ','
           << io::num(s.second_se) << ',' << io::num(p.n) << ',' << io::num(p.m) << '\n';
      }
    }
    io::write_text(out / "moments_mc.csv", mc.str());
  }
  io::write_text(out / "report.txt", emit_report(model, validation, sol, cl, comparisons));
}

/// Runs and maps failures to exit codes: 1 config, 2 validation, 3 numerical.
inline int run(const RunSpec& spec, std::ostream& err = std::cerr) {
  try {
    execute(spec);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::config);
  }
}

}  // namespace explq
