// Command-line front end: resolves a configuration, runs it, writes outputs.

#include "grkin/errors.hpp"
#include "grkin/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Finite-volume solver for the two-species generation-recombination kinetic model"};

  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool print_only = false;

  app.add_option("-c,--config", config_path, "Configuration file (key = value with [sections])");
  app.add_flag("--print-config", print_only, "Print the resolved configuration and exit");

  // Each flag maps onto one configuration key; values are validated by the loader.
  auto add = [&](const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
  };
  add("--test", "experiment.test", "Reference experiment 1-4 (0 = custom)");
  add("--model", "experiment.model", "linear | nonlinear");
  add("--initial", "experiment.initial_data",
      "far-from-equilibrium | smooth | random | perturbed-equilibrium | equilibrium");
  add("--seed", "experiment.seed", "Seed for random initial data");
  add("--flux", "flux.kind", "lax-friedrichs | centered | upwind");
  add("--lambda", "flux.lambda", "Lax-Friedrichs diffusion parameter, or auto");
  add("--nx", "grid.nx", "Number of spatial cells (odd)");
  add("--nv", "grid.nv", "L, half the number of velocity cells");
  add("--vstar", "grid.vstar", "Velocity cutoff");
  add("--dt", "time.dt", "Time step (initial step for the nonlinear model)");
  add("--dt-max", "time.dt_max", "Largest adaptive time step");
  add("--tfinal", "time.t_final", "Final time, or auto for the last snapshot time");
  add("--snapshots", "output.snapshots", "Comma-separated snapshot times");
  add("--out", "output.dir", "Output directory");
  app.add_flag_callback(
      "--emit-plot-script", [&overrides] { overrides["output.emit_plot_script"] = "true"; },
      "Write plot.py next to the CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<std::string> path = config_path.empty() ? std::nullopt : std::optional(config_path);
    const grkin::RunConfig cfg = grkin::load_config(path, overrides);
    if (print_only) {
      std::cout << grkin::emit_config(cfg);
      return 0;
    }
    const grkin::RunResult result = grkin::run_experiment(cfg);
    std::cout << grkin::format_summary(result.summary);
    if (!cfg.output_dir.empty()) std::cerr << "outputs written to " << cfg.output_dir << "\n";
    return 0;
  } catch (const grkin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
