#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "explq/explq.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Exploratory LQ control lab"};
  std::string config_path;
  std::string command;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> parallelism;
  std::string out_dir = ".";
  bool override_assumptions = false;
  app.add_option("--config", config_path, "flat key=value model/run config")->required();
  app.add_option("--command", command, "solve|residual|simulate|evaluate|cost|sweep|exact-vs-euler|moments")
      ->required();
  app.add_option("--seed", seed, "RNG seed (required by stochastic commands)");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--override-assumptions", override_assumptions, "run even if the model fails validation");
  app.add_option("--parallelism", parallelism, "worker threads")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(explq::ErrorKind::config);
  }
  explq::RunSpec spec;
  try {
    const auto cfg = explq::FlatConfig::load(config_path);
    spec = explq::make_run_spec(cfg, command, seed, parallelism, out_dir, override_assumptions);
  } catch (const explq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  }
  return explq::run(spec);
}
