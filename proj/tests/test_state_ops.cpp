#include "grkin/errors.hpp"
#include "grkin/linear_scheme.hpp"
#include "grkin/state_ops.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace grkin;
using grkin::testing::bumpy_profile;
using grkin::testing::random_pair;
using grkin::testing::rel_err;

namespace {

constexpr double kPi = std::numbers::pi;

struct Fixture {
  GridSpec grid;
  VelocityProfile chi1, chi2;
};

Fixture make_setup(int N, int L) {
  Fixture s{build_grid(kPi, N, L, 12.0), {}, {}};
  s.chi1 = discretize_profile(profiles::heavy_tailed, s.grid);
  s.chi2 = L >= 2 ? bumpy_profile(s.grid) : discretize_profile(profiles::gaussian, s.grid);
  return s;
}

// Direct evaluation of the weighted product by a double loop.
double naive_weighted(const SpeciesPair& a, const SpeciesPair& b, const Fixture& s, double rho) {
  long double acc = 0;
  for (int i = 0; i < s.grid.N; ++i)
    for (int k = 0; k < s.grid.nv(); ++k) {
      acc += static_cast<long double>(a.f(i, k)) * b.f(i, k) / (rho * s.chi1.values[k]);
      acc += static_cast<long double>(a.g(i, k)) * b.g(i, k) * rho / s.chi2.values[k];
    }
  return static_cast<double>(acc * s.grid.dx * s.grid.dv);
}

// The null space direction of the collision operator, modulated in space.
SpeciesPair null_state(const Fixture& s, double rho, const SpatialField& c) {
  SpeciesPair F = SpeciesPair::zeros(s.grid);
  for (int i = 0; i < s.grid.N; ++i)
    for (int k = 0; k < s.grid.nv(); ++k) {
      F.f(i, k) = rho * rho * s.chi1.values[k] * c[i];
      F.g(i, k) = -s.chi2.values[k] * c[i];
    }
  return F;
}

}  // namespace

TEST(MassDifference, Examples) {
  const Fixture s = make_setup(11, 4);
  std::mt19937_64 gen(1);
  SpeciesPair F = random_pair(s.grid, gen);
  F.g = F.f;
  EXPECT_EQ(mass_difference(F, s.grid), 0.0);

  const GridSpec g = build_grid(kPi, 101, 16, 12.0);
  const VelocityProfile chi = discretize_profile(profiles::heavy_tailed, g);
  const EquilibriumData eq = build_equilibrium(2.0, chi, chi, g);
  EXPECT_NEAR(mass_difference(eq.F_inf, g), 1.5 * kPi, 1e-12);

  const SpeciesPair R = random_pair(s.grid, gen);
  long double naive = 0;
  for (int i = 0; i < s.grid.N; ++i)
    for (int k = 0; k < s.grid.nv(); ++k) naive += static_cast<long double>(R.f(i, k)) - R.g(i, k);
  naive *= s.grid.dx * s.grid.dv;
  EXPECT_LE(std::abs(mass_difference(R, s.grid) - static_cast<double>(naive)), 1e-13 * std::max(1.0L, std::abs(naive)));
}

TEST(RhoInfStar, Examples) {
  EXPECT_DOUBLE_EQ(rho_from_mass(0.0, kPi), 1.0);
  EXPECT_NEAR(rho_from_mass(1.5 * kPi, kPi), 2.0, 1e-15);
  EXPECT_NEAR(rho_from_mass(-1.5 * kPi, kPi), 0.5, 1e-15);
  for (double M : {-1e6, -300.0, -1.0, -1e-8, 1e-8, 3.0, 1e4, 1e8}) {
    for (double T : {0.1, 1.0, kPi, 50.0}) {
      const double r = rho_from_mass(M, T);
      ASSERT_GT(r, 0.0);
      EXPECT_LE(std::abs(T * (r - 1 / r) - M), 1e-12 * std::max(1.0, std::abs(M)));
    }
  }
}

TEST(BuildEquilibrium, Examples) {
  const Fixture s = make_setup(5, 3);
  const EquilibriumData one = build_equilibrium(1.0, s.chi1, s.chi1, s.grid);
  EXPECT_EQ((one.F_inf.f - one.F_inf.g).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(one.D0_delta, s.chi1.D_delta);

  VelocityProfile a = s.chi1, b = s.chi2;
  a.D_delta = 1.0;
  b.D_delta = 6.0;
  EXPECT_NEAR(build_equilibrium(2.0, a, b, s.grid).D0_delta, 2.0, 1e-15);

  const EquilibriumData eq = build_equilibrium(1.7, s.chi1, s.chi2, s.grid);
  for (int i = 1; i < s.grid.N; ++i) {
    EXPECT_EQ((eq.F_inf.f.row(i) - eq.F_inf.f.row(0)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((eq.F_inf.g.row(i) - eq.F_inf.g.row(0)).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_GE(eq.D0_delta, std::min(s.chi1.D_delta, s.chi2.D_delta));
  EXPECT_LE(eq.D0_delta, std::max(s.chi1.D_delta, s.chi2.D_delta));

  try {
    build_equilibrium(0.0, s.chi1, s.chi2, s.grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveRho);
  }
}

TEST(WeightedInner, BilinearAndMatchesNaiveLoop) {
  const Fixture s = make_setup(11, 4);
  std::mt19937_64 gen(2);
  const double rho = 1.3;
  EXPECT_EQ(weighted_inner(SpeciesPair::zeros(s.grid), SpeciesPair::zeros(s.grid), s.chi1, s.chi2, rho, s.grid), 0.0);
  for (int rep = 0; rep < 20; ++rep) {
    const SpeciesPair A = random_pair(s.grid, gen), B = random_pair(s.grid, gen), C = random_pair(s.grid, gen);
    const double a = 0.7, b = -2.1;
    const double lhs = weighted_inner(a * A + b * B, C, s.chi1, s.chi2, rho, s.grid);
    const double rhs = a * weighted_inner(A, C, s.chi1, s.chi2, rho, s.grid) +
                       b * weighted_inner(B, C, s.chi1, s.chi2, rho, s.grid);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * (std::abs(lhs) + weighted_norm(C, s.chi1, s.chi2, rho, s.grid) *
                                                              (weighted_norm(A, s.chi1, s.chi2, rho, s.grid) +
                                                               weighted_norm(B, s.chi1, s.chi2, rho, s.grid))));
    EXPECT_LE(rel_err(weighted_inner(A, B, s.chi1, s.chi2, rho, s.grid), naive_weighted(A, B, s, rho)), 1e-12);
  }
}

TEST(Projector, RangeIdempotenceSelfAdjointnessOrthogonality) {
  std::mt19937_64 gen(3);
  for (int N : {3, 5, 11, 101}) {
    for (int L : {1, 2, 16}) {
      const Fixture s = make_setup(N, L);
      for (double rho : {0.4, 1.0, 2.7}) {
        SpatialField c = grkin::testing::random_field(N, gen);
        const SpeciesPair R = null_state(s, rho, c);
        const SpeciesPair PR = project_pi(R, rho, s.chi1, s.chi2, s.grid);
        EXPECT_LE(max_abs(PR - R), 1e-12 * max_abs(R));

        const SpeciesPair F = random_pair(s.grid, gen), G = random_pair(s.grid, gen);
        const SpeciesPair PF = project_pi(F, rho, s.chi1, s.chi2, s.grid);
        const SpeciesPair PG = project_pi(G, rho, s.chi1, s.chi2, s.grid);
        const double nF = weighted_norm(F, s.chi1, s.chi2, rho, s.grid);
        const double nG = weighted_norm(G, s.chi1, s.chi2, rho, s.grid);
        EXPECT_LE(max_abs(project_pi(PF, rho, s.chi1, s.chi2, s.grid) - PF), 1e-12 * max_abs(PF));
        EXPECT_LE(std::abs(weighted_inner(PF, G, s.chi1, s.chi2, rho, s.grid) -
                           weighted_inner(F, PG, s.chi1, s.chi2, rho, s.grid)),
                  1e-12 * nF * nG);
        EXPECT_LE(std::abs(weighted_inner(PF, F - PF, s.chi1, s.chi2, rho, s.grid)), 1e-12 * nF * nF);

        // ||u_h||_2 = C_u* ||Pi F||_Delta.
        const Moments m = moments_uJS(F.f - F.g, s.grid, 1.0);
        const double Cu = std::sqrt((rho * rho + 1) / rho);
        EXPECT_LE(rel_err(norm_l2(m.u, s.grid), Cu * weighted_norm(PF, s.chi1, s.chi2, rho, s.grid)), 1e-11);
      }
    }
  }
}

TEST(Collision, NullSpaceAndCoercivity) {
  std::mt19937_64 gen(4);
  for (int L : {1, 2, 16}) {
    const Fixture s = make_setup(11, L);
    for (double rho : {0.3, 1.0, 3.2}) {
      const SpeciesPair R = null_state(s, rho, grkin::testing::random_field(11, gen));
      EXPECT_LE(max_abs(collision_linear(R, rho, s.chi1, s.chi2, s.grid)), 1e-12 * max_abs(R));
      const double Cmc = std::min(rho, 1 / rho);
      for (int rep = 0; rep < 20; ++rep) {
        const SpeciesPair F = random_pair(s.grid, gen);
        const SpeciesPair micro = F - project_pi(F, rho, s.chi1, s.chi2, s.grid);
        const double LFF = weighted_inner(collision_linear(F, rho, s.chi1, s.chi2, s.grid), F, s.chi1, s.chi2, rho, s.grid);
        const double m2 = weighted_inner(micro, micro, s.chi1, s.chi2, rho, s.grid);
        EXPECT_LE(LFF, 1e-12 * m2);
        EXPECT_LE(LFF + Cmc * m2, 1e-12 * m2);
      }
    }
  }
}

TEST(Collision, EntrywiseMatchesAssembledOperator) {
  const Fixture s = make_setup(7, 3);
  std::mt19937_64 gen(5);
  const double rho = 1.9, dt = 0.37;
  const FluxKind flux = FluxKind::upwind();
  const ImplicitOperator op = assemble_linear_operator(s.grid, s.chi1, s.chi2, rho, dt, flux);
  const SpeciesPair F = random_pair(s.grid, gen);
  // A F = F + dt div F - dt L F.
  const SpeciesPair from_op = (-1.0 / dt) * (op.apply(F) - F - dt * flux_divergence(F, flux, s.grid));
  EXPECT_LE(max_abs(from_op - collision_linear(F, rho, s.chi1, s.chi2, s.grid)), 1e-13 * max_abs(from_op) * 10);
}

TEST(Densities, Examples) {
  const Fixture s = make_setup(9, 4);
  const double rho = 2.2;
  const EquilibriumData eq = build_equilibrium(rho, s.chi1, s.chi2, s.grid);
  const auto [rf, rg] = macroscopic_densities(eq.F_inf, s.grid);
  EXPECT_LE((rf.array() - rho).abs().maxCoeff(), 1e-14);
  EXPECT_LE((rg.array() - 1 / rho).abs().maxCoeff(), 1e-14);

  std::mt19937_64 gen(6);
  const SpeciesPair F = random_pair(s.grid, gen);
  const auto [af, ag] = macroscopic_densities(F, s.grid);
  for (int i = 0; i < s.grid.N; ++i) {
    double nf = 0, ng = 0;
    for (int k = 0; k < s.grid.nv(); ++k) {
      nf += s.grid.dv * F.f(i, k);
      ng += s.grid.dv * F.g(i, k);
    }
    EXPECT_NEAR(af[i], nf, 1e-13);
    EXPECT_NEAR(ag[i], ng, 1e-13);
  }
}

TEST(Moments, Examples) {
  const Fixture s = make_setup(9, 4);
  PhaseField h(s.grid.N, s.grid.nv());
  for (int i = 0; i < s.grid.N; ++i) h.row(i) = s.chi1.values.transpose();
  EXPECT_LE(moments_uJS(h, s.grid, 1.0).J.cwiseAbs().maxCoeff(), 1e-15);

  const EquilibriumData eq = build_equilibrium(1.0, s.chi1, s.chi1, s.grid);
  const Moments z = moments_uJS(eq.F_inf.f - eq.F_inf.g, s.grid, eq.D0_delta);
  EXPECT_EQ(z.u.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(z.J.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(z.S.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Moments, EstimatesHoldWithLedgerConstants) {
  std::mt19937_64 gen(8);
  for (int L : {1, 2, 16}) {
    const Fixture s = make_setup(11, L);
    for (double rho : {0.5, 1.0, 2.5}) {
      const ConstantsLedger c = constants_ledger(s.chi1, s.chi2, rho, s.grid, 6.0, 0.3);
      const double D0 = c.D0;
      for (int rep = 0; rep < 30; ++rep) {
        const SpeciesPair F = random_pair(s.grid, gen);
        const SpeciesPair micro = F - project_pi(F, rho, s.chi1, s.chi2, s.grid);
        const double nF = weighted_norm(F, s.chi1, s.chi2, rho, s.grid);
        const double nm = weighted_norm(micro, s.chi1, s.chi2, rho, s.grid);
        const Moments m = moments_uJS(F.f - F.g, s.grid, D0);
        const double tol = 1 + 1e-12;
        EXPECT_LE(norm_l2(m.J, s.grid), c.C_J1_star * nF * tol);
        EXPECT_LE(norm_l2(m.J, s.grid), c.C_J1_star * nm * tol);
        EXPECT_LE(norm_l2(m.S, s.grid), c.C_S_star * nm * tol);
        const SpatialField Jf = velocity_moment(F.f, s.grid.v_centers, s.grid);
        const SpatialField Jg = velocity_moment(F.g, s.grid.v_centers, s.grid);
        EXPECT_LE(norm_l2(Jf / rho - rho * Jg, s.grid), c.C_J2_star * nm * tol);
      }
    }
  }
}

TEST(Ledger, SymmetricPoint) {
  const Fixture s = make_setup(101, 16);
  const ConstantsLedger c = constants_ledger(s.chi1, s.chi1, 1.0, s.grid, 6.0, 0.3);
  EXPECT_EQ(c.C_mc_star, 1.0);
  EXPECT_NEAR(c.C_u_star, std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(c.C_J2_star, c.C_J1_star);
}

TEST(Ledger, IndependentEvaluation) {
  const GridSpec g = build_grid(kPi, 101, 16, 12.0);
  const VelocityProfile all[] = {discretize_profile(profiles::gaussian, g),
                                 discretize_profile(profiles::heavy_tailed, g),
                                 discretize_profile(profiles::oscillating, g)};
  for (const VelocityProfile& p1 : all) {
    for (const VelocityProfile& p2 : all) {
      for (double rho : {0.6, 1.0, 2.77}) {
        const double lambda = 0.155, dtm = 0.3;
        const ConstantsLedger c = constants_ledger(p1, p2, rho, g, lambda, dtm);
        const double D1 = p1.D_delta, D2 = p2.D_delta, r2 = rho * rho;
        const double D0 = (r2 * D1 + D2) / (r2 + 1);
        const double Cmc = std::min(rho, 1 / rho), Cu = std::sqrt((r2 + 1) / rho);
        const double CJ1 = std::sqrt(2 * std::max(rho * D1, D2 / rho));
        const double CJ2 = std::max(rho, 1 / rho) * CJ1;
        const double CP = g.dx / std::sin(2 * kPi * 50 / 101.0);
        EXPECT_NEAR(c.C_P, std::abs(CP), 1e-14);
        EXPECT_EQ(c.C_mc_star, Cmc);
        EXPECT_NEAR(c.C_J2_star, CJ2, 1e-13 * CJ2);
        const double Ct = c.C_S_star * Cu + CJ2 * c.C_P * Cu + 4 * lambda * CJ1 * Cu;
        const double d1 = Cmc / (CJ1 * CJ1);
        const double d2 = Cmc * D0 * Cu * Cu / (Ct * Ct + CJ1 * CJ1 * D0 * Cu * Cu);
        const double d3 = 1 / (2 * CJ1 * Cu * c.C_P);
        const double d = 0.9 * std::min({d1, d2, d3});
        EXPECT_NEAR(c.delta, d, 1e-13 * d);
        const double K = 0.5 * std::min(Cmc - d * CJ1 * CJ1, d * D0 * Cu * Cu);
        const double a1 = CJ1 * CJ1 + 4 * lambda * lambda * Cu * Cu;
        const double Cd = 0.5 + d * CJ1 * Cu * c.C_P + d * a1 * dtm;
        EXPECT_NEAR(c.K_delta, K, 1e-12 * K);
        EXPECT_NEAR(c.kappa, K / Cd, 1e-12 * K / Cd);
        for (double v : {c.C_mc_star, c.C_u_star, c.C_J1_star, c.C_S_star, c.C_J2_star, c.C_P, c.delta_1, c.delta_2,
                         c.delta_3, c.delta, c.K_delta, c.c_delta_lower, c.C_delta_upper, c.kappa}) {
          EXPECT_GT(v, 0.0);
        }
        EXPECT_LT(c.delta, c.delta_ceiling);
      }
    }
  }
}

TEST(Ledger, NearCeilingStaysPositive) {
  const Fixture s = make_setup(101, 16);
  const ConstantsLedger c = constants_ledger(s.chi1, s.chi2, 1.4, s.grid, 6.0, 0.3, 0.99);
  EXPECT_GT(c.K_delta, 0.0);
  EXPECT_GT(c.c_delta_lower, 0.0);
  for (double bad : {0.0, 1.0, -0.2, 1.5}) {
    try {
      constants_ledger(s.chi1, s.chi2, 1.4, s.grid, 6.0, 0.3, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidDeltaFraction);
    }
  }
}

TEST(Stacking, RoundTrip) {
  const Fixture s = make_setup(5, 2);
  std::mt19937_64 gen(10);
  const SpeciesPair F = random_pair(s.grid, gen);
  const Eigen::VectorXd x = stack(F);
  ASSERT_EQ(x.size(), 2 * 5 * 4);
  EXPECT_EQ(x[1 * 4 + 3], F.f(1, 3));
  EXPECT_EQ(x[20 + 2 * 4 + 1], F.g(2, 1));
  EXPECT_EQ(max_abs(unstack(x, s.grid) - F), 0.0);
}
