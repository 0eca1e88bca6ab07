#pragma once

#include "grkin/phase_grid.hpp"

#include <utility>

namespace grkin {

/// A state of the two-species system, or a perturbation of it.
struct SpeciesPair {
  PhaseField f;
  PhaseField g;

  static SpeciesPair zeros(const GridSpec& grid);

  SpeciesPair& operator+=(const SpeciesPair& o);
  SpeciesPair& operator-=(const SpeciesPair& o);
  SpeciesPair& operator*=(double a);
};

SpeciesPair operator+(SpeciesPair a, const SpeciesPair& b);
SpeciesPair operator-(SpeciesPair a, const SpeciesPair& b);
SpeciesPair operator*(double a, SpeciesPair b);

/// Stacked vector: all of f (row-major, i * 2L + k), then all of g.
Eigen::VectorXd stack(const SpeciesPair& F);
SpeciesPair unstack(const Eigen::VectorXd& x, const GridSpec& grid);

double max_abs(const SpeciesPair& F);

double mass_difference(const SpeciesPair& F, const GridSpec& grid);

/// Positive root of |T| (rho - 1/rho) = M0, evaluated without cancellation.
double rho_from_mass(double M0, double torus_length);
double rho_inf_star(const SpeciesPair& F0, const GridSpec& grid);

struct EquilibriumData {
  double rho_inf_star = 1.0;
  SpeciesPair F_inf;
  double D0_delta = 0.0;
};

EquilibriumData build_equilibrium(double rho, const VelocityProfile& chi1, const VelocityProfile& chi2,
                                  const GridSpec& grid);

double weighted_inner(const SpeciesPair& F1, const SpeciesPair& F2, const VelocityProfile& chi1,
                      const VelocityProfile& chi2, double rho, const GridSpec& grid);
double weighted_norm(const SpeciesPair& F, const VelocityProfile& chi1, const VelocityProfile& chi2, double rho,
                     const GridSpec& grid);

SpeciesPair project_pi(const SpeciesPair& F, double rho, const VelocityProfile& chi1, const VelocityProfile& chi2,
                       const GridSpec& grid);

SpeciesPair collision_linear(const SpeciesPair& F, double rho, const VelocityProfile& chi1,
                             const VelocityProfile& chi2, const GridSpec& grid);

/// Velocity sums of f and g scaled by dv.
std::pair<SpatialField, SpatialField> macroscopic_densities(const SpeciesPair& F, const GridSpec& grid);

/// sum_k dv w_k h_ik per spatial cell.
SpatialField velocity_moment(const PhaseField& h, const Eigen::VectorXd& weights, const GridSpec& grid);

struct Moments {
  SpatialField u;
  SpatialField J;
  SpatialField S;
};

Moments moments_uJS(const PhaseField& h, const GridSpec& grid, double D0);

struct ConstantsLedger {
  double C_mc_star = 0, C_u_star = 0, C_J1_star = 0, C_S_star = 0, C_J2_star = 0;
  double C_P = 0;
  double lambda = 0;
  double C_tilde = 0;
  double alpha1_star = 0;
  double delta_1 = 0, delta_2 = 0, delta_3 = 0;
  double delta_ceiling = 0;
  double delta = 0;
  double K_delta = 0;
  double C_delta_upper = 0, c_delta_lower = 0;
  double kappa = 0;
  double D0 = 0;
  bool C_S_fallback = false;
};

ConstantsLedger constants_ledger(const VelocityProfile& chi1, const VelocityProfile& chi2, double rho,
                                 const GridSpec& grid, double lambda, double dt_max, double delta_fraction = 0.9);

}  // namespace grkin
