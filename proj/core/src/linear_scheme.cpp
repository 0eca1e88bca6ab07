#include "grkin/linear_scheme.hpp"

#include "grkin/errors.hpp"

#include <algorithm>
#include <vector>

namespace grkin {

FluxKind FluxKind::lax_friedrichs(double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::ValidationError, "Lax-Friedrichs lambda must be positive");
  return {FluxType::LaxFriedrichs, lambda};
}

const char* to_string(FluxType type) {
  switch (type) {
    case FluxType::LaxFriedrichs: return "lax-friedrichs";
    case FluxType::Centered: return "centered";
    case FluxType::Upwind: return "upwind";
  }
  return "unknown";
}

double default_lambda(const GridSpec& grid, double dt) { return std::max(0.5 * grid.v_star, grid.dx / (2.0 * dt)); }

namespace {

// Two-point flux phi(a, b) = alpha a + beta b per unit dv.
struct FluxCoefficients {
  double alpha;
  double beta;
};

FluxCoefficients coefficients(const FluxKind& flux, double v) {
  switch (flux.type) {
    case FluxType::LaxFriedrichs: return {0.5 * v + flux.lambda, 0.5 * v - flux.lambda};
    case FluxType::Centered: return {0.5 * v, 0.5 * v};
    case FluxType::Upwind: return {std::max(v, 0.0), -std::max(-v, 0.0)};
  }
  return {0.0, 0.0};
}

}  // namespace

PhaseField flux_divergence(const PhaseField& field, const FluxKind& flux, const GridSpec& grid) {
  const int N = grid.N;
  const int nv = grid.nv();
  PhaseField out(N, nv);
  std::vector<double> face(static_cast<std::size_t>(N));
  for (int k = 0; k < nv; ++k) {
    const double v = grid.v_centers[k];
    const double vp = std::max(v, 0.0);
    const double vm = std::max(-v, 0.0);
    // face[i] holds the flux through x_{i+1/2}.
    for (int i = 0; i < N; ++i) {
      const double a = field(i, k);
      const double b = field((i + 1) % N, k);
      switch (flux.type) {
        case FluxType::LaxFriedrichs: face[i] = grid.dv * (0.5 * v * (b + a) - flux.lambda * (b - a)); break;
        case FluxType::Centered: face[i] = grid.dv * (0.5 * v * (b + a)); break;
        case FluxType::Upwind: face[i] = grid.dv * (vp * a - vm * b); break;
      }
    }
    for (int i = 0; i < N; ++i) {
      out(i, k) = (face[i] - face[(i + N - 1) % N]) / (grid.dx * grid.dv);
    }
  }
  return out;
}

SpeciesPair flux_divergence(const SpeciesPair& F, const FluxKind& flux, const GridSpec& grid) {
  return {flux_divergence(F.f, flux, grid), flux_divergence(F.g, flux, grid)};
}

SparseMatrix transport_matrix(const GridSpec& grid, const FluxKind& flux) {
  const int N = grid.N;
  const int nv = grid.nv();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3) * N * nv);
  for (int i = 0; i < N; ++i) {
    const int ip = (i + 1) % N;
    const int im = (i + N - 1) % N;
    for (int k = 0; k < nv; ++k) {
      const auto [alpha, beta] = coefficients(flux, grid.v_centers[k]);
      const int row = i * nv + k;
      trip.emplace_back(row, im * nv + k, -alpha / grid.dx);
      trip.emplace_back(row, row, (alpha - beta) / grid.dx);
      trip.emplace_back(row, ip * nv + k, beta / grid.dx);
    }
  }
  const int n = N * nv;
  SparseMatrix T(n, n);
  T.setFromTriplets(trip.begin(), trip.end());
  T.prune(0.0);
  return T;
}

ImplicitOperator::ImplicitOperator(GridSpec grid, SparseMatrix matrix, double dt)
    : grid_(std::move(grid)), matrix_(std::move(matrix)), dt_(dt), lu_(std::make_shared<Factorization>()) {
  matrix_.makeCompressed();
  lu_->compute(matrix_);
  if (lu_->info() != Eigen::Success) {
    throw Error(ErrorCode::SingularOperator, "sparse LU factorization failed: " + lu_->lastErrorMessage());
  }
}

SpeciesPair ImplicitOperator::apply(const SpeciesPair& F) const { return unstack(matrix_ * stack(F), grid_); }

SpeciesPair ImplicitOperator::solve(const SpeciesPair& rhs) const {
  if (!lu_ || lu_->info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "no factorization available");
  const Eigen::VectorXd b = stack(rhs);
  Eigen::VectorXd x = lu_->solve(b);
  // One round of iterative refinement tightens the scheme residual.
  const Eigen::VectorXd r = b - matrix_ * x;
  x += lu_->solve(r);
  if (lu_->info() != Eigen::Success || !x.allFinite()) {
    throw Error(ErrorCode::SolveFailure, "triangular solve failed");
  }
  return unstack(x, grid_);
}

ImplicitOperator assemble_linear_operator(const GridSpec& grid, const VelocityProfile& chi1,
                                          const VelocityProfile& chi2, double rho, double dt, const FluxKind& flux) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ValidationError, "dt must be positive");
  if (!(rho > 0.0)) throw Error(ErrorCode::NonPositiveRho, "operator needs rho > 0");
  const int N = grid.N;
  const int nv = grid.nv();
  const int n = N * nv;
  const SparseMatrix T = transport_matrix(grid, flux);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(2) * (T.nonZeros() + n + static_cast<std::size_t>(n) * nv));
  for (int off : {0, n}) {
    for (int c = 0; c < T.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(T, c); it; ++it) {
        trip.emplace_back(off + static_cast<int>(it.row()), off + static_cast<int>(it.col()), dt * it.value());
      }
    }
  }
  for (int r = 0; r < n; ++r) {
    trip.emplace_back(r, r, 1.0 + dt / rho);
    trip.emplace_back(n + r, n + r, 1.0 + dt * rho);
  }
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < nv; ++k) {
      const double cf = dt * rho * chi1.values[k] * grid.dv;
      const double cg = dt * chi2.values[k] * grid.dv / rho;
      for (int kk = 0; kk < nv; ++kk) {
        trip.emplace_back(i * nv + k, n + i * nv + kk, cf);
        trip.emplace_back(n + i * nv + k, i * nv + kk, cg);
      }
    }
  }
  SparseMatrix A(2 * n, 2 * n);
  A.setFromTriplets(trip.begin(), trip.end());
  return ImplicitOperator(grid, std::move(A), dt);
}

SpeciesPair step_linear(const SpeciesPair& F_n, const ImplicitOperator& op) { return op.solve(F_n); }

SpeciesPair linear_scheme_lhs(const SpeciesPair& F, const VelocityProfile& chi1, const VelocityProfile& chi2,
                              double rho, double dt, const FluxKind& flux, const GridSpec& grid) {
  const SpeciesPair div = flux_divergence(F, flux, grid);
  const SpeciesPair coll = collision_linear(F, rho, chi1, chi2, grid);
  return F + dt * (div - coll);
}

namespace detail {

MomentResiduals moment_residuals(const SpeciesPair& F_n, const SpeciesPair& F_np1, const GridSpec& grid,
                                 double rho, double D0, double dt, double lambda, const SpatialField& J_source) {
  const Moments m0 = moments_uJS(F_n.f - F_n.g, grid, D0);
  const Moments m1 = moments_uJS(F_np1.f - F_np1.g, grid, D0);
  Eigen::VectorXd vel = grid.v_centers;
  const SpatialField Jf = velocity_moment(F_np1.f, vel, grid);
  const SpatialField Jg = velocity_moment(F_np1.g, vel, grid);

  const double diff = lambda * grid.dx;
  const SpatialField ru = (m1.u - m0.u) / dt + discrete_gradient(m1.J, Gradient::Centered, grid) -
                          diff * second_difference(m1.u, grid);
  const SpatialField rJ = (m1.J - m0.J) / dt + discrete_gradient(m1.S, Gradient::Centered, grid) +
                          D0 * discrete_gradient(m1.u, Gradient::Centered, grid) -
                          diff * second_difference(m1.J, grid) + (Jf / rho - rho * Jg) - J_source;
  return {ru.cwiseAbs().maxCoeff(), rJ.cwiseAbs().maxCoeff()};
}

}  // namespace detail

MomentResiduals verify_moment_schemes(const SpeciesPair& F_n, const SpeciesPair& F_np1, const GridSpec& grid,
                                      double rho, double D0, double dt, double lambda) {
  return detail::moment_residuals(F_n, F_np1, grid, rho, D0, dt, lambda, SpatialField::Zero(grid.N));
}

}  // namespace grkin
