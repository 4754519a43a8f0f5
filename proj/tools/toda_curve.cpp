// toda_curve: generate closed discrete curves, certify the bracket relations of
// their Flaschka-Manakov variables, and simulate the first Toda flow.
//
// Exit status: 0 when every check passes, 1 when a check fails (or a
// simulation meets a degenerate state), 2 on a usage or configuration error.

#include "toda_curves/cli_verify.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using toda_curves::ConfigError;
using toda_curves::RunConfig;

int emit(const RunConfig& cfg, const toda_curves::RunResult& r) {
  if (cfg.out.empty()) {
    std::cout << r.output;
  } else {
    toda_curves::write_atomic(cfg.out, r.output);
    toda_curves::log(toda_curves::LogLevel::Info, "wrote " + cfg.out);
  }
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed discrete curves and the periodic Toda lattice"};

  RunConfig cfg;
  std::string command = "verify";
  std::string format = "json";
  std::vector<double> lambdas;
  double tol = 0.0;

  app.add_option("--command", command, "generate | verify | expand | simulate | invariants")
      ->check(CLI::IsMember({"generate", "verify", "expand", "simulate", "invariants"}));
  app.add_option("--n", cfg.n, "number of curve sites")->capture_default_str();
  app.add_option("--lambda", lambdas, "spectral parameter (repeatable); default 0, 1, -1")->take_all();
  app.add_option("--seed", cfg.seed, "first random seed")->capture_default_str();
  app.add_option("--trials", cfg.trials, "number of consecutive seeds for verify")->capture_default_str();
  auto* tol_opt = app.add_option("--tol", tol, "override every check's tolerance");
  app.add_option("--t-end", cfg.t_end, "simulation horizon")->capture_default_str();
  app.add_option("--dt", cfg.dt, "fixed integration step")->capture_default_str();
  app.add_option("--out", cfg.out, "output file (default: stdout)");
  app.add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  app.add_option("--preset", cfg.preset, "uniform | hexagon | jitter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  cfg.command = *toda_curves::parse_command(command);
  cfg.format = format == "csv" ? toda_curves::OutputFormat::Csv : toda_curves::OutputFormat::Json;
  if (!lambdas.empty()) cfg.lambdas = lambdas;
  if (tol_opt->count() > 0) cfg.tol = tol;

  try {
    return emit(cfg, toda_curves::run(cfg));
  } catch (const ConfigError& e) {
    std::cerr << "toda_curve: " << e.what() << '\n';
    return 2;
  } catch (const toda_curves::DegeneracyCrossing& e) {
    std::cerr << "toda_curve: degenerate state at t = " << toda_curves::format_double(e.time) << ": " << e.what()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "toda_curve: " << e.what() << '\n';
    return 1;
  }
}
