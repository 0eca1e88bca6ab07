#pragma once

#include "grkin/diagnostics.hpp"
#include "grkin/nonlinear_scheme.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace grkin {

enum class ModelKind { Linear, Nonlinear };

enum class InitialData { FarFromEquilibrium, Smooth, Random, PerturbedEquilibrium, Equilibrium };

struct RunConfig {
  int test = 0;  // 0 = custom, 1..4 = the reference experiments
  ModelKind model = ModelKind::Linear;
  InitialData initial = InitialData::FarFromEquilibrium;
  std::uint64_t seed = 1;

  double torus_length = 0.0;
  int nx = 101;
  int nv = 16;  // L: half the number of velocity cells
  double vstar = 12.0;

  std::string chi1 = "heavytail";  // gaussian | heavytail | oscillating | file:<path>
  std::string chi2 = "heavytail";
  bool symmetrize = false;

  FluxType flux = FluxType::LaxFriedrichs;
  std::optional<double> lambda;  // absent: dx/(2 dt), floored at v*/2 when nonlinear

  double dt = 0.1;  // fixed step (linear) or initial step (nonlinear)
  double dt_max = 0.3;
  double dt_min = 1e-8;
  std::optional<double> t_final;  // absent = largest snapshot time
  double growth_factor = 2.0;
  double shrink_factor = 0.5;

  NewtonConfig newton;
  int accept_iterations = 10;
  bool truncated = false;

  double delta_fraction = 0.9;
  double envelope_fraction = 0.2;  // gamma1 = gamma2 = fraction * rho
  double fit_floor = 1e-14;

  double perturbation_amplitude = 0.1;
  double perturbation_rho = 1.5;

  std::vector<double> snapshots;
  std::string output_dir = "run";
  bool emit_plot_script = false;
};

/// Defaults of a reference experiment (0 gives the custom baseline).
RunConfig defaults_for_test(int test);

/// Reads an INI-style file (may be empty) and applies `overrides`, keyed as
/// "section.key". The test number selects the defaults that the file and
/// the overrides refine. Unknown keys and invalid values are rejected.
RunConfig load_config(const std::optional<std::string>& path, const std::map<std::string, std::string>& overrides = {});
RunConfig parse_config(const std::string& text, const std::map<std::string, std::string>& overrides = {});

/// Canonical text of the fully resolved configuration.
std::string emit_config(const RunConfig& cfg);

/// Throws ValidationError naming the offending field.
void validate(const RunConfig& cfg);

double effective_lambda(const RunConfig& cfg);
double effective_t_final(const RunConfig& cfg);

struct RunSummary {
  std::optional<DecayFit> fit;
  std::string fit_error;
  double final_norm = 0.0;
  double max_mass_drift = 0.0;
  BoundsReport bounds_extremes;
  int bounds_violations = 0;
  double rho_inf_star = 0.0;
  double lambda = 0.0;
  ConstantsLedger ledger;
  // Per-step certificate margins; positive means the inequality holds.
  double min_coercivity_slack = 0.0;
  double min_dissipation_slack = 0.0;
  double min_norm_lower_slack = 0.0;
  double min_norm_upper_slack = 0.0;
  double min_phi_estimate_slack = 0.0;
  bool moment_checked = false;
  double max_moment_residual_u = 0.0;
  double max_moment_residual_J = 0.0;
  double max_poisson_residual = 0.0;
  int steps = 0;
  int rejected_steps = 0;
  double wall_clock_seconds = 0.0;
  std::string status = "ok";
};

struct RunResult {
  RunConfig config;
  std::vector<TimeSeriesRecord> series;
  RunSummary summary;
  SpeciesPair final_state;  // physical distributions at t_final
};

/// Runs one experiment and writes its outputs into cfg.output_dir (skipped
/// when the directory is empty).
RunResult run_experiment(const RunConfig& cfg);

SpeciesPair initial_state(const RunConfig& cfg, const GridSpec& grid);
VelocityProfile make_profile(const std::string& name, const GridSpec& grid, bool symmetrize);

std::string format_csv(const std::vector<TimeSeriesRecord>& series);
std::string format_summary(const RunSummary& summary);
std::vector<TimeSeriesRecord> parse_csv(const std::string& text);

}  // namespace grkin
