#include "grkin/state_ops.hpp"

#include "grkin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace grkin {

SpeciesPair SpeciesPair::zeros(const GridSpec& grid) {
  return {PhaseField::Zero(grid.N, grid.nv()), PhaseField::Zero(grid.N, grid.nv())};
}

SpeciesPair& SpeciesPair::operator+=(const SpeciesPair& o) {
  f += o.f;
  g += o.g;
  return *this;
}

SpeciesPair& SpeciesPair::operator-=(const SpeciesPair& o) {
  f -= o.f;
  g -= o.g;
  return *this;
}

SpeciesPair& SpeciesPair::operator*=(double a) {
  f *= a;
  g *= a;
  return *this;
}

SpeciesPair operator+(SpeciesPair a, const SpeciesPair& b) { return a += b; }
SpeciesPair operator-(SpeciesPair a, const SpeciesPair& b) { return a -= b; }
SpeciesPair operator*(double a, SpeciesPair b) { return b *= a; }

Eigen::VectorXd stack(const SpeciesPair& F) {
  const Eigen::Index n = F.f.size();
  Eigen::VectorXd x(2 * n);
  x.head(n) = Eigen::Map<const Eigen::VectorXd>(F.f.data(), n);
  x.tail(n) = Eigen::Map<const Eigen::VectorXd>(F.g.data(), n);
  return x;
}

SpeciesPair unstack(const Eigen::VectorXd& x, const GridSpec& grid) {
  const Eigen::Index n = static_cast<Eigen::Index>(grid.cells());
  SpeciesPair F = SpeciesPair::zeros(grid);
  Eigen::Map<Eigen::VectorXd>(F.f.data(), n) = x.head(n);
  Eigen::Map<Eigen::VectorXd>(F.g.data(), n) = x.tail(n);
  return F;
}

double max_abs(const SpeciesPair& F) { return std::max(F.f.cwiseAbs().maxCoeff(), F.g.cwiseAbs().maxCoeff()); }

double mass_difference(const SpeciesPair& F, const GridSpec& grid) {
  const PhaseField h = F.f - F.g;
  return grid.dx * grid.dv * pairwise_sum(h.data(), static_cast<std::size_t>(h.size()));
}

double rho_from_mass(double M0, double torus_length) {
  const double s = std::sqrt(M0 * M0 + 4.0 * torus_length * torus_length);
  if (M0 >= 0.0) return (M0 + s) / (2.0 * torus_length);
  return 2.0 * torus_length / (s - M0);
}

double rho_inf_star(const SpeciesPair& F0, const GridSpec& grid) {
  return rho_from_mass(mass_difference(F0, grid), grid.torus_length);
}

EquilibriumData build_equilibrium(double rho, const VelocityProfile& chi1, const VelocityProfile& chi2,
                                  const GridSpec& grid) {
  if (!(rho > 0.0)) throw Error(ErrorCode::NonPositiveRho, "equilibrium needs rho > 0");
  EquilibriumData eq;
  eq.rho_inf_star = rho;
  eq.F_inf = SpeciesPair::zeros(grid);
  for (int i = 0; i < grid.N; ++i) {
    eq.F_inf.f.row(i) = rho * chi1.values.transpose();
    eq.F_inf.g.row(i) = chi2.values.transpose() / rho;
  }
  const double r2 = rho * rho;
  eq.D0_delta = (r2 * chi1.D_delta + chi2.D_delta) / (r2 + 1.0);
  return eq;
}

double weighted_inner(const SpeciesPair& F1, const SpeciesPair& F2, const VelocityProfile& chi1,
                      const VelocityProfile& chi2, double rho, const GridSpec& grid) {
  const int N = grid.N;
  const int nv = grid.nv();
  std::vector<double> terms(static_cast<std::size_t>(N) * nv);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < nv; ++k) {
      terms[static_cast<std::size_t>(i) * nv + k] = F1.f(i, k) * F2.f(i, k) / (chi1.values[k] * rho) +
                                                    F1.g(i, k) * F2.g(i, k) * rho / chi2.values[k];
    }
  }
  return grid.dx * grid.dv * pairwise_sum(terms.data(), terms.size());
}

double weighted_norm(const SpeciesPair& F, const VelocityProfile& chi1, const VelocityProfile& chi2, double rho,
                     const GridSpec& grid) {
  return std::sqrt(std::max(0.0, weighted_inner(F, F, chi1, chi2, rho, grid)));
}

SpatialField velocity_moment(const PhaseField& h, const Eigen::VectorXd& weights, const GridSpec& grid) {
  const int nv = grid.nv();
  SpatialField out(grid.N);
  Eigen::VectorXd row(nv);
  for (int i = 0; i < grid.N; ++i) {
    for (int k = 0; k < nv; ++k) row[k] = grid.dv * weights[k] * h(i, k);
    out[i] = pairwise_sum(row.data(), static_cast<std::size_t>(nv));
  }
  return out;
}

std::pair<SpatialField, SpatialField> macroscopic_densities(const SpeciesPair& F, const GridSpec& grid) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.nv());
  return {velocity_moment(F.f, ones, grid), velocity_moment(F.g, ones, grid)};
}

SpeciesPair project_pi(const SpeciesPair& F, double rho, const VelocityProfile& chi1, const VelocityProfile& chi2,
                       const GridSpec& grid) {
  const auto [rf, rg] = macroscopic_densities(F, grid);
  const double r2 = rho * rho;
  SpeciesPair P = SpeciesPair::zeros(grid);
  for (int i = 0; i < grid.N; ++i) {
    const double c = (rf[i] - rg[i]) / (r2 + 1.0);
    P.f.row(i) = (c * r2) * chi1.values.transpose();
    P.g.row(i) = (-c) * chi2.values.transpose();
  }
  return P;
}

SpeciesPair collision_linear(const SpeciesPair& F, double rho, const VelocityProfile& chi1,
                             const VelocityProfile& chi2, const GridSpec& grid) {
  const auto [rf, rg] = macroscopic_densities(F, grid);
  SpeciesPair out = SpeciesPair::zeros(grid);
  for (int i = 0; i < grid.N; ++i) {
    for (int k = 0; k < grid.nv(); ++k) {
      out.f(i, k) = -rho * chi1.values[k] * rg[i] - F.f(i, k) / rho;
      out.g(i, k) = -chi2.values[k] * rf[i] / rho - rho * F.g(i, k);
    }
  }
  return out;
}

Moments moments_uJS(const PhaseField& h, const GridSpec& grid, double D0) {
  const int nv = grid.nv();
  Eigen::VectorXd w0 = Eigen::VectorXd::Ones(nv), w1(nv), w2(nv);
  for (int k = 0; k < nv; ++k) {
    const double v = grid.v_centers[k];
    w1[k] = v;
    w2[k] = v * v - D0;
  }
  return {velocity_moment(h, w0, grid), velocity_moment(h, w1, grid), velocity_moment(h, w2, grid)};
}

namespace {

// sum dv (v^2 - D0)^2 chi, evaluated directly; never negative.
double centered_fourth(const VelocityProfile& chi, const GridSpec& grid, double D0) {
  Eigen::VectorXd t(grid.nv());
  for (int k = 0; k < grid.nv(); ++k) {
    const double w = grid.v_centers[k] * grid.v_centers[k] - D0;
    t[k] = grid.dv * w * w * chi.values[k];
  }
  return pairwise_sum(t.data(), static_cast<std::size_t>(t.size()));
}

}  // namespace

ConstantsLedger constants_ledger(const VelocityProfile& chi1, const VelocityProfile& chi2, double rho,
                                 const GridSpec& grid, double lambda, double dt_max, double delta_fraction) {
  if (!(delta_fraction > 0.0 && delta_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidDeltaFraction, "delta fraction must lie in (0, 1)");
  }
  if (!(rho > 0.0)) throw Error(ErrorCode::NonPositiveRho, "ledger needs rho > 0");

  ConstantsLedger c;
  const double r2 = rho * rho;
  const double D1 = chi1.D_delta, D2 = chi2.D_delta;
  const double D0 = (r2 * D1 + D2) / (r2 + 1.0);
  c.D0 = D0;
  c.lambda = lambda;
  c.C_P = poincare_constant(grid);

  c.C_mc_star = std::min(rho, 1.0 / rho);
  c.C_u_star = std::sqrt((r2 + 1.0) / rho);
  c.C_J1_star = std::sqrt(2.0 * std::max(rho * D1, D2 / rho));

  double m1 = chi1.Q_delta - 2.0 * D0 * D1 + D0 * D0;
  double m2 = chi2.Q_delta - 2.0 * D0 * D2 + D0 * D0;
  if (m1 < 0.0 || m2 < 0.0) {
    c.C_S_fallback = true;
    m1 = centered_fourth(chi1, grid, D0);
    m2 = centered_fourth(chi2, grid, D0);
  }
  c.C_S_star = std::sqrt(2.0 * std::max(rho * m1, m2 / rho));
  c.C_J2_star = std::max(rho, 1.0 / rho) * c.C_J1_star;

  const double Cu = c.C_u_star, CJ1 = c.C_J1_star, CP = c.C_P;
  c.C_tilde = c.C_S_star * Cu + c.C_J2_star * CP * Cu + 4.0 * lambda * CJ1 * Cu;

  c.delta_1 = c.C_mc_star / (CJ1 * CJ1);
  c.delta_2 = c.C_mc_star * D0 * Cu * Cu / (c.C_tilde * c.C_tilde + CJ1 * CJ1 * D0 * Cu * Cu);
  c.delta_3 = 1.0 / (2.0 * CJ1 * Cu * CP);
  c.delta_ceiling = std::min({c.delta_1, c.delta_2, c.delta_3});
  c.delta = delta_fraction * c.delta_ceiling;

  const double d = c.delta;
  c.alpha1_star = CJ1 * CJ1 + 4.0 * (lambda * Cu) * (lambda * Cu);
  c.K_delta = 0.5 * std::min(c.C_mc_star - d * CJ1 * CJ1, d * D0 * Cu * Cu);
  c.C_delta_upper = 0.5 + d * CJ1 * Cu * CP + d * c.alpha1_star * dt_max;
  c.c_delta_lower = 0.5 - d * CJ1 * Cu * CP;
  c.kappa = c.K_delta / c.C_delta_upper;
  return c;
}

}  // namespace grkin
