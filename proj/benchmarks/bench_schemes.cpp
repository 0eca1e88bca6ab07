#include "grkin/diagnostics.hpp"
#include "grkin/linear_scheme.hpp"
#include "grkin/nonlinear_scheme.hpp"

#include <benchmark/benchmark.h>

#include <numbers>
#include <random>

using namespace grkin;

namespace {

struct Problem {
  GridSpec grid;
  VelocityProfile chi1, chi2;
  SpeciesPair state;
};

Problem make_problem(int N, int L) {
  Problem p{build_grid(std::numbers::pi, N, L, 12.0), {}, {}, {}};
  p.chi1 = discretize_profile(profiles::heavy_tailed, p.grid);
  p.chi2 = discretize_profile(profiles::oscillating, p.grid);
  const EquilibriumData eq = build_equilibrium(1.3, p.chi1, p.chi2, p.grid);
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> uni(0.9, 1.1);
  p.state = eq.F_inf;
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < p.grid.nv(); ++k) {
      p.state.f(i, k) *= uni(gen);
      p.state.g(i, k) *= uni(gen);
    }
  return p;
}

void BM_LinearAssemble(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  const FluxKind flux = FluxKind::lax_friedrichs(default_lambda(p.grid, 0.1));
  for (auto _ : state) {
    ImplicitOperator op = assemble_linear_operator(p.grid, p.chi1, p.chi2, 1.3, 0.1, flux);
    benchmark::DoNotOptimize(op);
  }
}

void BM_LinearStep(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  const ImplicitOperator op =
      assemble_linear_operator(p.grid, p.chi1, p.chi2, 1.3, 0.1, FluxKind::lax_friedrichs(default_lambda(p.grid, 0.1)));
  SpeciesPair F = p.state;
  for (auto _ : state) {
    F = step_linear(F, op);
    benchmark::DoNotOptimize(F.f.data());
  }
}

void BM_NonlinearResidual(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  NonlinearStepper stepper(p.grid, p.chi1, p.chi2, FluxKind::lax_friedrichs(6.0));
  for (auto _ : state) {
    SpeciesPair R = stepper.residual(p.state, p.state, 1e-3);
    benchmark::DoNotOptimize(R.f.data());
  }
}

void BM_NewtonSolve(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  NonlinearStepper stepper(p.grid, p.chi1, p.chi2, FluxKind::lax_friedrichs(6.0));
  for (auto _ : state) {
    NewtonResult r = stepper.solve(p.state, 1e-2, NewtonConfig{});
    benchmark::DoNotOptimize(r.F.f.data());
    state.counters["iterations"] = r.iterations;
  }
}

void BM_Poisson(benchmark::State& state) {
  const GridSpec g = build_grid(std::numbers::pi, static_cast<int>(state.range(0)), 1, 1.0);
  SpatialField u(g.N);
  for (int i = 0; i < g.N; ++i) u[i] = std::sin(2.0 * g.x_centers[i]) + 0.3 * std::cos(6.0 * g.x_centers[i]);
  u.array() -= u.mean();
  for (auto _ : state) {
    SpatialField phi = solve_discrete_poisson(u, g);
    benchmark::DoNotOptimize(phi.data());
  }
}

}  // namespace

BENCHMARK(BM_LinearAssemble)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearStep)->Arg(51)->Arg(101)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NonlinearResidual)->Arg(51)->Arg(101)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NewtonSolve)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Poisson)->Arg(101)->Arg(1001)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
