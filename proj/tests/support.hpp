#pragma once

#include "grkin/linear_scheme.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace grkin::testing {

inline SpatialField random_field(int n, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  SpatialField u(n);
  for (int i = 0; i < n; ++i) u[i] = uni(gen);
  return u;
}

inline SpeciesPair random_pair(const GridSpec& grid, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  SpeciesPair F = SpeciesPair::zeros(grid);
  for (int i = 0; i < grid.N; ++i)
    for (int k = 0; k < grid.nv(); ++k) {
      F.f(i, k) = uni(gen);
      F.g(i, k) = uni(gen);
    }
  return F;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)}); }

// A symmetric, positive, non-Gaussian profile so the two species differ.
inline VelocityProfile bumpy_profile(const GridSpec& grid) {
  return discretize_profile([](double v) { return std::exp(-0.3 * v * v) * (1.5 + std::cos(v)); }, grid);
}

// Stencil of one velocity row written out by hand.
inline PhaseField naive_divergence(const PhaseField& a, const FluxKind& flux, const GridSpec& g) {
  PhaseField out(a.rows(), a.cols());
  const int N = g.N;
  for (int i = 0; i < N; ++i) {
    const int ip = (i + 1) % N, im = (i + N - 1) % N;
    for (int k = 0; k < g.nv(); ++k) {
      const double v = g.v_centers[k];
      double d = 0;
      switch (flux.type) {
        case FluxType::Centered: d = v * (a(ip, k) - a(im, k)) / 2; break;
        case FluxType::LaxFriedrichs:
          d = v * (a(ip, k) - a(im, k)) / 2 - flux.lambda * (a(ip, k) - 2 * a(i, k) + a(im, k));
          break;
        case FluxType::Upwind: d = v > 0 ? v * (a(i, k) - a(im, k)) : v * (a(ip, k) - a(i, k)); break;
      }
      out(i, k) = d / g.dx;
    }
  }
  return out;
}

// I + dt T - dt L assembled entry by entry, in the stacked ordering.
inline Eigen::MatrixXd dense_operator(const GridSpec& g, const VelocityProfile& c1, const VelocityProfile& c2, double rho,
                               double dt, const FluxKind& flux) {
  const int nv = g.nv(), n = g.N * nv;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < g.N; ++i) {
      for (int k = 0; k < nv; ++k) {
        // Transport: divergence of the unit vector at each column.
        for (int col_i = 0; col_i < g.N; ++col_i) {
          PhaseField e = PhaseField::Zero(g.N, nv);
          e(col_i, k) = 1.0;
          const double d = naive_divergence(e, flux, g)(i, k);
          if (d != 0.0) A(s * n + i * nv + k, s * n + col_i * nv + k) += dt * d;
        }
      }
    }
  }
  for (int i = 0; i < g.N; ++i) {
    for (int k = 0; k < nv; ++k) {
      const int rf = i * nv + k, rg = n + i * nv + k;
      A(rf, rf) += dt / rho;
      A(rg, rg) += dt * rho;
      for (int kk = 0; kk < nv; ++kk) {
        A(rf, n + i * nv + kk) += dt * rho * c1.values[k] * g.dv;
        A(rg, i * nv + kk) += dt * c2.values[k] * g.dv / rho;
      }
    }
  }
  return A;
}

}  // namespace grkin::testing
