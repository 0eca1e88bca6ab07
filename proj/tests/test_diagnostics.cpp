#include "grkin/diagnostics.hpp"
#include "grkin/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <numbers>
#include <random>

using namespace grkin;
using grkin::testing::random_field;
using grkin::testing::random_pair;

namespace {

constexpr double kPi = std::numbers::pi;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Poisson, ZeroRightHandSide) {
  const GridSpec g = build_grid(kPi, 11, 1, 1.0);
  EXPECT_EQ(solve_discrete_poisson(SpatialField::Zero(11), g).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Poisson, FourierModeMatchesSymbolAndDenseSolve) {
  const int N = 21;
  const GridSpec g = build_grid(2.0, N, 1, 1.0);
  // Dense bordered system assembled independently.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 1, N + 1);
  for (int i = 0; i < N; ++i) {
    A(i, (i + 2) % N) += 1 / (4 * g.dx * g.dx);
    A(i, i) -= 2 / (4 * g.dx * g.dx);
    A(i, (i + N - 2) % N) += 1 / (4 * g.dx * g.dx);
    A(i, N) = 1;
    A(N, i) = g.dx;
  }
  for (int k = 1; k < 4; ++k) {
    SpatialField u(N);
    for (int i = 0; i < N; ++i) u[i] = std::cos(2 * kPi * k * g.x_centers[i] / g.torus_length);
    const double s = std::sin(2 * kPi * k / N);
    const SpatialField symbol = u * (g.dx * g.dx / (s * s));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N + 1);
    rhs.head(N) = -u;
    const Eigen::VectorXd dense = A.fullPivLu().solve(rhs).head(N);
    const SpatialField phi = solve_discrete_poisson(u, g);
    EXPECT_LE((phi - symbol).cwiseAbs().maxCoeff(), 1e-11 * symbol.cwiseAbs().maxCoeff());
    EXPECT_LE((phi - dense).cwiseAbs().maxCoeff(), 1e-11 * symbol.cwiseAbs().maxCoeff());
  }
}

TEST(Poisson, RandomResidualAndMean) {
  std::mt19937_64 gen(1);
  for (int N : {3, 5, 11, 101}) {
    const GridSpec g = build_grid(kPi, N, 1, 1.0);
    const PoissonSolver solver(g);
    for (int rep = 0; rep < 20; ++rep) {
      SpatialField u = random_field(N, gen);
      u.array() -= u.mean();
      const SpatialField phi = solver.solve(u);
      EXPECT_LE((wide_laplacian(phi, g) + u).cwiseAbs().maxCoeff(), 1e-11);
      EXPECT_LE(std::abs(g.dx * phi.sum()), 1e-12);
    }
  }
}

TEST(Poisson, Errors) {
  const GridSpec g = build_grid(kPi, 11, 1, 1.0);
  EXPECT_EQ(code_of([&] { solve_discrete_poisson(SpatialField::Ones(11), g); }), ErrorCode::NonZeroMean);
  GridSpec even = g;
  even.N = 10;
  EXPECT_EQ(code_of([&] { PoissonSolver{even}; }), ErrorCode::EvenN);
}

TEST(Entropy, Definition) {
  const GridSpec g = build_grid(kPi, 21, 4, 6.0);
  const VelocityProfile c1 = discretize_profile(profiles::heavy_tailed, g);
  const VelocityProfile c2 = grkin::testing::bumpy_profile(g);
  const double rho = 1.7;
  const ConstantsLedger L = constants_ledger(c1, c2, rho, g, 1.0, 0.1);
  const double D0 = L.D0;

  PotentialState zero{SpatialField::Zero(21), std::nullopt};
  const EntropyValue h0 = modified_entropy(SpeciesPair::zeros(g), zero, L.delta, 0.1, L, c1, c2, g, rho, D0);
  EXPECT_EQ(h0.value, 0.0);
  EXPECT_TRUE(h0.partial);

  std::mt19937_64 gen(2);
  const SpeciesPair F = random_pair(g, gen);
  const PotentialState pot{random_field(21, gen), random_field(21, gen)};
  const EntropyValue h = modified_entropy(F, pot, L.delta, 0.1, L, c1, c2, g, rho, D0);
  EXPECT_FALSE(h.partial);
  // Independent evaluation.
  double J_dot = 0, jump = 0;
  for (int i = 0; i < 21; ++i) {
    double J = 0;
    for (int k = 0; k < g.nv(); ++k) J += g.dv * g.v_centers[k] * (F.f(i, k) - F.g(i, k));
    const int ip = (i + 1) % 21, im = (i + 20) % 21;
    const double dc = (pot.phi_current[ip] - pot.phi_current[im]) / (2 * g.dx);
    const double dp = (pot.phi_previous->coeff(ip) - pot.phi_previous->coeff(im)) / (2 * g.dx);
    J_dot += g.dx * J * dc;
    jump += g.dx * (dc - dp) * (dc - dp);
  }
  const double expect = 0.5 * weighted_inner(F, F, c1, c2, rho, g) + L.delta * J_dot + L.delta / 0.2 * jump;
  EXPECT_NEAR(h.value, expect, 1e-12 * std::abs(expect));

  EXPECT_EQ(code_of([&] { modified_entropy(F, pot, L.delta_ceiling, 0.1, L, c1, c2, g, rho, D0); }),
            ErrorCode::DeltaOutOfRange);
  EXPECT_EQ(code_of([&] { modified_entropy(F, pot, 0.0, 0.1, L, c1, c2, g, rho, D0); }), ErrorCode::DeltaOutOfRange);
}

TEST(DecayFit, ExactExponential) {
  std::vector<double> t, v;
  for (int k = 0; k < 20; ++k) {
    t.push_back(0.25 * k);
    v.push_back(3 * std::exp(-2 * 0.25 * k));
  }
  const DecayFit f = fit_decay_rate(t, v, 0.0, 10.0);
  EXPECT_NEAR(f.kappa, 2.0, 1e-10);
  EXPECT_NEAR(f.prefactor, 3.0, 1e-9);
  EXPECT_GE(f.r_squared, 1 - 1e-12);
  EXPECT_EQ(f.points, 20u);
}

TEST(DecayFit, ConstantSeries) {
  const std::vector<double> t{0, 1, 2, 3, 4, 5}, v(6, 0.7);
  const DecayFit f = fit_decay_rate(t, v, 0, 5);
  EXPECT_EQ(f.kappa, 0.0);
}

TEST(DecayFit, FloorWindowAndErrors) {
  std::vector<double> t, v;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(k);
    v.push_back(std::max(1e-16, std::exp(-k)));
  }
  const auto [lo, hi] = default_fit_window(t, v, 1e-14);
  EXPECT_EQ(hi, 26.0);  // first value below 1e-11
  EXPECT_DOUBLE_EQ(lo, 0.2 * 26.0);
  const DecayFit f = fit_decay_rate(t, v, 0, 40, 1e-14);
  EXPECT_NEAR(f.kappa, 1.0, 1e-10);

  EXPECT_EQ(code_of([&] { fit_decay_rate(t, v, 0, 3); }), ErrorCode::InsufficientData);
  std::vector<double> bad = v;
  bad[3] = -1;
  EXPECT_EQ(code_of([&] { fit_decay_rate(t, bad, 0, 40); }), ErrorCode::NonPositiveValues);
  EXPECT_EQ(code_of([&] { default_fit_window({}, {}); }), ErrorCode::InsufficientData);
}

TEST(DecayFit, SecondHalfRefitIsStable) {
  std::vector<double> t, v;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int k = 0; k < 200; ++k) {
    t.push_back(0.1 * k);
    v.push_back(std::exp(-0.4 * 0.1 * k + noise(gen)));
  }
  const DecayFit all = fit_decay_rate(t, v, 0, 20), half = fit_decay_rate(t, v, 10, 20);
  EXPECT_LE(std::abs(all.kappa - half.kappa), 0.1 * all.kappa);
}
