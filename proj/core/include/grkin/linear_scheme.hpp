#pragma once

#include "grkin/state_ops.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>

namespace grkin {

enum class FluxType { LaxFriedrichs, Centered, Upwind };

struct FluxKind {
  FluxType type = FluxType::LaxFriedrichs;
  double lambda = 0.0;  // only read for LaxFriedrichs

  static FluxKind lax_friedrichs(double lambda);
  static FluxKind centered() { return {FluxType::Centered, 0.0}; }
  static FluxKind upwind() { return {FluxType::Upwind, 0.0}; }
};

const char* to_string(FluxType type);

/// lambda = max(v*/2, dx / (2 dt)).
double default_lambda(const GridSpec& grid, double dt);

using SparseMatrix = Eigen::SparseMatrix<double>;

/// (F_{i+1/2,k} - F_{i-1/2,k}) / (dx dv) for one species.
PhaseField flux_divergence(const PhaseField& field, const FluxKind& flux, const GridSpec& grid);
SpeciesPair flux_divergence(const SpeciesPair& F, const FluxKind& flux, const GridSpec& grid);

/// Matrix of flux_divergence acting on one species in row-major layout.
SparseMatrix transport_matrix(const GridSpec& grid, const FluxKind& flux);

/// I + dt * Transport - dt * L on the stacked state, with a cached LU
/// factorization. Copies share the factorization.
class ImplicitOperator {
 public:
  ImplicitOperator(GridSpec grid, SparseMatrix matrix, double dt);

  const SparseMatrix& matrix() const { return matrix_; }
  const GridSpec& grid() const { return grid_; }
  double dt() const { return dt_; }

  SpeciesPair apply(const SpeciesPair& F) const;
  SpeciesPair solve(const SpeciesPair& rhs) const;

 private:
  using Factorization = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

  GridSpec grid_;
  SparseMatrix matrix_;
  double dt_;
  std::shared_ptr<Factorization> lu_;
};

ImplicitOperator assemble_linear_operator(const GridSpec& grid, const VelocityProfile& chi1,
                                          const VelocityProfile& chi2, double rho, double dt, const FluxKind& flux);

SpeciesPair step_linear(const SpeciesPair& F_n, const ImplicitOperator& op);

/// Left-hand side F + dt (div F - L F), evaluated cell by cell.
SpeciesPair linear_scheme_lhs(const SpeciesPair& F, const VelocityProfile& chi1, const VelocityProfile& chi2,
                              double rho, double dt, const FluxKind& flux, const GridSpec& grid);

struct MomentResiduals {
  double u = 0.0;
  double J = 0.0;
};

/// Max-norm residuals of the continuity and momentum equations satisfied by
/// the moments of h = f - g across one step. `lambda` is the diffusion
/// parameter of the flux (0 for the centered flux).
MomentResiduals verify_moment_schemes(const SpeciesPair& F_n, const SpeciesPair& F_np1, const GridSpec& grid,
                                      double rho, double D0, double dt, double lambda);

namespace detail {
// Shared by the nonlinear variant: `J_source` is added to the momentum
// right-hand side, evaluated at the new time level.
MomentResiduals moment_residuals(const SpeciesPair& F_n, const SpeciesPair& F_np1, const GridSpec& grid,
                                 double rho, double D0, double dt, double lambda, const SpatialField& J_source);
}  // namespace detail

}  // namespace grkin
