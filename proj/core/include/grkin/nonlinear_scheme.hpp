#pragma once

#include "grkin/linear_scheme.hpp"

#include <optional>
#include <vector>

namespace grkin {

struct NewtonConfig {
  double tol_residual = 1e-10;  // max-norm of the per-unit-time residual
  int max_iterations = 30;
  // An update is always taken: a small residual at F^n alone does not mean
  // the state has stopped moving.
  int min_iterations = 1;
  double mass_diff_drift_tol = 1e-10;  // relative to max(1, |M|)
};

struct AdaptiveController {
  double dt_current = 1e-3;
  double dt_min = 1e-8;
  double dt_max = 0.3;
  double growth_factor = 2.0;
  double shrink_factor = 0.5;
  int accept_iteration_budget = 10;
};

struct BoundsEnvelope {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

/// Clamping data for the truncated scheme.
struct Truncation {
  BoundsEnvelope env;
  double rho = 1.0;
};

struct NewtonResult {
  SpeciesPair F;
  int iterations = 0;
  double residual = 0.0;
  double mass_drift = 0.0;  // relative drift of the mass difference
};

/// Implicit Euler for the nonlinear system, solved by Newton's method with
/// the exact Jacobian. The transport part and the sparsity pattern are built
/// once; each Newton iteration refactorizes numerically only.
class NonlinearStepper {
 public:
  NonlinearStepper(GridSpec grid, VelocityProfile chi1, VelocityProfile chi2, FluxKind flux,
                   std::optional<Truncation> truncation = std::nullopt);
  ~NonlinearStepper();
  NonlinearStepper(NonlinearStepper&&) noexcept;
  NonlinearStepper& operator=(NonlinearStepper&&) noexcept;

  const GridSpec& grid() const { return grid_; }
  const FluxKind& flux() const { return flux_; }

  SpeciesPair residual(const SpeciesPair& F_next, const SpeciesPair& F_n, double dt) const;
  SparseMatrix jacobian(const SpeciesPair& F, double dt) const;

  /// Throws NewtonDiverged when `max_iterations` is exhausted or the
  /// iterate stops being finite.
  NewtonResult solve(const SpeciesPair& F_n, double dt, const NewtonConfig& cfg);

 private:
  struct Impl;

  // Collision inputs after optional clamping, and the clamp derivatives.
  void collision_state(const SpeciesPair& F, SpeciesPair& Ft, SpeciesPair& active) const;

  GridSpec grid_;
  VelocityProfile chi1_;
  VelocityProfile chi2_;
  FluxKind flux_;
  std::optional<Truncation> truncation_;
  SparseMatrix transport_;
  std::unique_ptr<Impl> impl_;
};

SpeciesPair residual_nonlinear(const SpeciesPair& F_next, const SpeciesPair& F_n, double dt, const FluxKind& flux,
                               const VelocityProfile& chi1, const VelocityProfile& chi2, const GridSpec& grid);

SparseMatrix nonlinear_jacobian(const SpeciesPair& F, double dt, const FluxKind& flux, const VelocityProfile& chi1,
                                const VelocityProfile& chi2, const GridSpec& grid);

NewtonResult newton_solve(const SpeciesPair& F_n, double dt, const FluxKind& flux, const NewtonConfig& cfg,
                          const VelocityProfile& chi1, const VelocityProfile& chi2, const GridSpec& grid);

struct AdvanceResult {
  SpeciesPair F;
  double dt_used = 0.0;
  AdaptiveController ctrl;
  int iterations = 0;
  std::vector<double> rejected_dts;
};

/// One accepted step. `dt_cap` bounds the attempted step (used to land on
/// output times) without altering the controller's own step size.
AdvanceResult adaptive_advance(const SpeciesPair& F_n, const AdaptiveController& ctrl, const NewtonConfig& cfg,
                               NonlinearStepper& stepper, double dt_cap = 0.0);

SpeciesPair truncate_state(const SpeciesPair& F, const BoundsEnvelope& env, double rho, const VelocityProfile& chi1,
                           const VelocityProfile& chi2);

struct BoundsReport {
  double f_ratio_min = 0, f_ratio_max = 0;
  double g_ratio_min = 0, g_ratio_max = 0;
  bool pass = false;
};

BoundsReport check_maximum_principle(const SpeciesPair& F, const BoundsEnvelope& env, double rho,
                                     const VelocityProfile& chi1, const VelocityProfile& chi2);

/// Moment residuals for the nonlinear scheme, on the deviations from the
/// equilibrium F_inf built from `rho`.
MomentResiduals verify_nonlinear_moment_schemes(const SpeciesPair& F_n, const SpeciesPair& F_np1,
                                                const EquilibriumData& eq, const GridSpec& grid, double dt,
                                                double lambda);

}  // namespace grkin
