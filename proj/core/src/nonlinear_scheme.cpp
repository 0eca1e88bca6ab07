#include "grkin/nonlinear_scheme.hpp"

#include "grkin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace grkin {

struct NonlinearStepper::Impl {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
};

NonlinearStepper::NonlinearStepper(GridSpec grid, VelocityProfile chi1, VelocityProfile chi2, FluxKind flux,
                                   std::optional<Truncation> truncation)
    : grid_(std::move(grid)),
      chi1_(std::move(chi1)),
      chi2_(std::move(chi2)),
      flux_(flux),
      truncation_(truncation),
      transport_(transport_matrix(grid_, flux_)),
      impl_(std::make_unique<Impl>()) {}

NonlinearStepper::~NonlinearStepper() = default;
NonlinearStepper::NonlinearStepper(NonlinearStepper&&) noexcept = default;
NonlinearStepper& NonlinearStepper::operator=(NonlinearStepper&&) noexcept = default;

void NonlinearStepper::collision_state(const SpeciesPair& F, SpeciesPair& Ft, SpeciesPair& active) const {
  Ft = F;
  active.f = PhaseField::Ones(grid_.N, grid_.nv());
  active.g = PhaseField::Ones(grid_.N, grid_.nv());
  if (!truncation_) return;
  const double rho = truncation_->rho;
  const double lo = rho - truncation_->env.gamma1;
  const double hi = rho + truncation_->env.gamma2;
  for (int i = 0; i < grid_.N; ++i) {
    for (int k = 0; k < grid_.nv(); ++k) {
      const double c1 = chi1_.values[k], c2 = chi2_.values[k];
      const double f = F.f(i, k), g = F.g(i, k);
      if (f < lo * c1 || f > hi * c1) {
        Ft.f(i, k) = std::clamp(f, lo * c1, hi * c1);
        active.f(i, k) = 0.0;
      }
      if (g < c2 / hi || g > c2 / lo) {
        Ft.g(i, k) = std::clamp(g, c2 / hi, c2 / lo);
        active.g(i, k) = 0.0;
      }
    }
  }
}

SpeciesPair NonlinearStepper::residual(const SpeciesPair& F_next, const SpeciesPair& F_n, double dt) const {
  SpeciesPair Ft, active;
  collision_state(F_next, Ft, active);
  const auto [rf, rg] = macroscopic_densities(Ft, grid_);
  SpeciesPair R = (1.0 / dt) * (F_next - F_n);
  R += flux_divergence(F_next, flux_, grid_);
  for (int i = 0; i < grid_.N; ++i) {
    for (int k = 0; k < grid_.nv(); ++k) {
      R.f(i, k) -= chi1_.values[k] - rg[i] * Ft.f(i, k);
      R.g(i, k) -= chi2_.values[k] - rf[i] * Ft.g(i, k);
    }
  }
  return R;
}

SparseMatrix NonlinearStepper::jacobian(const SpeciesPair& F, double dt) const {
  SpeciesPair Ft, active;
  collision_state(F, Ft, active);
  const auto [rf, rg] = macroscopic_densities(Ft, grid_);
  const int N = grid_.N;
  const int nv = grid_.nv();
  const int n = N * nv;
  const double dv = grid_.dv;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(2) * (transport_.nonZeros() + n + static_cast<std::size_t>(n) * nv));
  for (int off : {0, n}) {
    for (int c = 0; c < transport_.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(transport_, c); it; ++it) {
        trip.emplace_back(off + static_cast<int>(it.row()), off + static_cast<int>(it.col()), it.value());
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < nv; ++k) {
      const int r = i * nv + k;
      trip.emplace_back(r, r, 1.0 / dt + rg[i] * active.f(i, k));
      trip.emplace_back(n + r, n + r, 1.0 / dt + rf[i] * active.g(i, k));
      // d(rho_g f)/d g_{i k'} = dv f_ik, and symmetrically for g.
      for (int kk = 0; kk < nv; ++kk) {
        trip.emplace_back(r, n + i * nv + kk, dv * Ft.f(i, k) * active.g(i, kk));
        trip.emplace_back(n + r, i * nv + kk, dv * Ft.g(i, k) * active.f(i, kk));
      }
    }
  }
  SparseMatrix Jm(2 * n, 2 * n);
  Jm.setFromTriplets(trip.begin(), trip.end());
  Jm.makeCompressed();
  return Jm;
}

NewtonResult NonlinearStepper::solve(const SpeciesPair& F_n, double dt, const NewtonConfig& cfg) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ValidationError, "dt must be positive");
  NewtonResult out;
  out.F = F_n;
  SpeciesPair R = residual(out.F, F_n, dt);
  out.residual = max_abs(R);
  while (out.iterations < cfg.min_iterations || !(out.residual <= cfg.tol_residual)) {
    if (out.iterations >= cfg.max_iterations || !std::isfinite(out.residual)) {
      std::ostringstream msg;
      msg << "no convergence at dt=" << dt << " after " << out.iterations << " iterations, residual "
          << out.residual;
      throw Error(ErrorCode::NewtonDiverged, msg.str());
    }
    const SparseMatrix Jm = jacobian(out.F, dt);
    if (!impl_->analyzed) {
      impl_->lu.analyzePattern(Jm);
      impl_->analyzed = true;
    }
    impl_->lu.factorize(Jm);
    if (impl_->lu.info() != Eigen::Success) {
      throw Error(ErrorCode::SolveFailure, "Jacobian factorization failed: " + impl_->lu.lastErrorMessage());
    }
    const Eigen::VectorXd delta = impl_->lu.solve(-stack(R));
    if (impl_->lu.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "Jacobian solve failed");
    out.F += unstack(delta, grid_);
    ++out.iterations;
    R = residual(out.F, F_n, dt);
    out.residual = max_abs(R);
  }
  const double m0 = mass_difference(F_n, grid_);
  out.mass_drift = std::abs(mass_difference(out.F, grid_) - m0) / std::max(1.0, std::abs(m0));
  return out;
}

SpeciesPair residual_nonlinear(const SpeciesPair& F_next, const SpeciesPair& F_n, double dt, const FluxKind& flux,
                               const VelocityProfile& chi1, const VelocityProfile& chi2, const GridSpec& grid) {
  return NonlinearStepper(grid, chi1, chi2, flux).residual(F_next, F_n, dt);
}

SparseMatrix nonlinear_jacobian(const SpeciesPair& F, double dt, const FluxKind& flux, const VelocityProfile& chi1,
                                const VelocityProfile& chi2, const GridSpec& grid) {
  return NonlinearStepper(grid, chi1, chi2, flux).jacobian(F, dt);
}

NewtonResult newton_solve(const SpeciesPair& F_n, double dt, const FluxKind& flux, const NewtonConfig& cfg,
                          const VelocityProfile& chi1, const VelocityProfile& chi2, const GridSpec& grid) {
  NonlinearStepper stepper(grid, chi1, chi2, flux);
  return stepper.solve(F_n, dt, cfg);
}

AdvanceResult adaptive_advance(const SpeciesPair& F_n, const AdaptiveController& ctrl, const NewtonConfig& cfg,
                               NonlinearStepper& stepper, double dt_cap) {
  if (!(ctrl.dt_min > 0.0 && ctrl.dt_min <= ctrl.dt_current && ctrl.dt_current <= ctrl.dt_max) ||
      !(ctrl.growth_factor > 1.0 && ctrl.shrink_factor > 0.0 && ctrl.shrink_factor < 1.0)) {
    throw Error(ErrorCode::ValidationError, "adaptive controller invariants violated");
  }
  NewtonConfig attempt_cfg = cfg;
  attempt_cfg.max_iterations = std::min(cfg.max_iterations, ctrl.accept_iteration_budget);

  AdvanceResult out;
  out.ctrl = ctrl;
  double dt = ctrl.dt_current;
  while (true) {
    const bool capped = dt_cap > 0.0 && dt_cap < dt;
    const double dt_try = capped ? dt_cap : dt;
    std::string why;
    try {
      NewtonResult res = stepper.solve(F_n, dt_try, attempt_cfg);
      if (res.mass_drift <= cfg.mass_diff_drift_tol) {
        out.F = std::move(res.F);
        out.dt_used = dt_try;
        out.iterations = res.iterations;
        out.ctrl.dt_current = capped ? dt : std::min(dt * ctrl.growth_factor, ctrl.dt_max);
        return out;
      }
      std::ostringstream msg;
      msg << "mass drift " << res.mass_drift;
      why = msg.str();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NewtonDiverged && e.code() != ErrorCode::SolveFailure) throw;
      why = e.what();
    }
    out.rejected_dts.push_back(dt_try);
    if (dt <= ctrl.dt_min) {
      throw Error(ErrorCode::StepFailed, "dt_min reached without an accepted step (" + why + ")");
    }
    dt = std::max(dt * ctrl.shrink_factor, ctrl.dt_min);
  }
}

SpeciesPair truncate_state(const SpeciesPair& F, const BoundsEnvelope& env, double rho, const VelocityProfile& chi1,
                           const VelocityProfile& chi2) {
  SpeciesPair out = F;
  const double lo = rho - env.gamma1, hi = rho + env.gamma2;
  for (Eigen::Index i = 0; i < F.f.rows(); ++i) {
    for (Eigen::Index k = 0; k < F.f.cols(); ++k) {
      out.f(i, k) = std::clamp(F.f(i, k), lo * chi1.values[k], hi * chi1.values[k]);
      out.g(i, k) = std::clamp(F.g(i, k), chi2.values[k] / hi, chi2.values[k] / lo);
    }
  }
  return out;
}

BoundsReport check_maximum_principle(const SpeciesPair& F, const BoundsEnvelope& env, double rho,
                                     const VelocityProfile& chi1, const VelocityProfile& chi2) {
  BoundsReport r;
  PhaseField a = F.f, b = F.g;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    a.col(k) /= chi1.values[k];
    b.col(k) /= chi2.values[k];
  }
  r.f_ratio_min = a.minCoeff();
  r.f_ratio_max = a.maxCoeff();
  r.g_ratio_min = b.minCoeff();
  r.g_ratio_max = b.maxCoeff();
  const double lo = rho - env.gamma1, hi = rho + env.gamma2;
  // A state clamped onto the envelope divides back to the bound up to one ulp.
  const double slack = 4.0 * std::numeric_limits<double>::epsilon();
  r.pass = r.f_ratio_min >= lo * (1 - slack) && r.f_ratio_max <= hi * (1 + slack) &&
           r.g_ratio_min >= (1 - slack) / hi && r.g_ratio_max <= (1 + slack) / lo;
  return r;
}

MomentResiduals verify_nonlinear_moment_schemes(const SpeciesPair& F_n, const SpeciesPair& F_np1,
                                                const EquilibriumData& eq, const GridSpec& grid, double dt,
                                                double lambda) {
  const double rho = eq.rho_inf_star;
  const SpeciesPair Dn = F_n - eq.F_inf;
  const SpeciesPair Dnp1 = F_np1 - eq.F_inf;
  const auto [rf, rg] = macroscopic_densities(F_np1, grid);
  const Eigen::VectorXd vel = grid.v_centers;
  const SpatialField Jf = velocity_moment(Dnp1.f, vel, grid);
  const SpatialField Jg = velocity_moment(Dnp1.g, vel, grid);
  const SpatialField extra = -((rg.array() - 1.0 / rho) * Jf.array() - (rf.array() - rho) * Jg.array()).matrix();
  return detail::moment_residuals(Dn, Dnp1, grid, rho, eq.D0_delta, dt, lambda, extra);
}

}  // namespace grkin
