#include "grkin/phase_grid.hpp"

#include "grkin/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace grkin {

namespace {

void require_odd(int N) {
  if (N < 3 || N % 2 == 0) {
    throw Error(ErrorCode::EvenN, "N must be odd and at least 3, got " + std::to_string(N));
  }
}

}  // namespace

GridSpec build_grid(double torus_length, int N, int L, double v_star) {
  if (!(torus_length > 0.0) || !(v_star > 0.0) || L < 1 || N < 2) {
    throw Error(ErrorCode::InvalidGrid, "grid sizes must be positive");
  }
  require_odd(N);

  GridSpec g;
  g.torus_length = torus_length;
  g.N = N;
  g.L = L;
  g.v_star = v_star;
  g.dx = torus_length / N;
  g.dv = v_star / L;

  g.x_centers.resize(N);
  for (int i = 0; i < N; ++i) g.x_centers[i] = (i + 0.5) * g.dx;

  // Interfaces are built as m*dv with integer m, so the velocity grid is
  // exactly symmetric: (-m)*dv == -(m*dv) in floating point.
  const int nv = 2 * L;
  g.v_interfaces.resize(nv + 1);
  for (int k = 0; k <= nv; ++k) g.v_interfaces[k] = (k - L) * g.dv;
  g.v_interfaces[0] = -v_star;
  g.v_interfaces[nv] = v_star;

  g.v_centers.resize(nv);
  for (int k = 0; k < nv; ++k) g.v_centers[k] = 0.5 * (g.v_interfaces[k] + g.v_interfaces[k + 1]);
  return g;
}

SpatialField discrete_gradient(const SpatialField& u, Gradient variant, const GridSpec& grid) {
  const int N = grid.N;
  SpatialField out(N);
  for (int i = 0; i < N; ++i) {
    const int ip = (i + 1) % N;
    const int im = (i + N - 1) % N;
    switch (variant) {
      case Gradient::Centered: out[i] = (u[ip] - u[im]) / (2.0 * grid.dx); break;
      case Gradient::Forward: out[i] = (u[ip] - u[i]) / grid.dx; break;
      case Gradient::Backward: out[i] = (u[i] - u[im]) / grid.dx; break;
    }
  }
  return out;
}

SpatialField second_difference(const SpatialField& u, const GridSpec& grid) {
  const int N = grid.N;
  const double inv = 1.0 / (grid.dx * grid.dx);
  SpatialField out(N);
  for (int i = 0; i < N; ++i) {
    out[i] = (u[(i + 1) % N] - 2.0 * u[i] + u[(i + N - 1) % N]) * inv;
  }
  return out;
}

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += data[k];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

double inner_l2(const SpatialField& u, const SpatialField& w, const GridSpec& grid) {
  const Eigen::VectorXd prod = u.cwiseProduct(w);
  return grid.dx * pairwise_sum(prod.data(), static_cast<std::size_t>(prod.size()));
}

double norm_l2(const SpatialField& u, const GridSpec& grid) { return std::sqrt(inner_l2(u, u, grid)); }

double poincare_constant(const GridSpec& grid) {
  require_odd(grid.N);
  double smallest = 1.0;
  for (int k = 1; k < grid.N; ++k) {
    smallest = std::min(smallest, std::abs(std::sin(2.0 * std::numbers::pi * k / grid.N)));
  }
  return grid.dx / smallest;
}

VelocityProfile profile_from_samples(const Eigen::VectorXd& samples, const GridSpec& grid, bool symmetrize) {
  const int nv = grid.nv();
  if (samples.size() != nv) {
    throw Error(ErrorCode::InvalidGrid, "profile needs " + std::to_string(nv) + " samples");
  }
  for (int k = 0; k < nv; ++k) {
    if (!(samples[k] > 0.0) || !std::isfinite(samples[k])) {
      throw Error(ErrorCode::NonPositiveSample,
                  "profile sample at v=" + std::to_string(grid.v_centers[k]) + " is not positive");
    }
  }

  Eigen::VectorXd vals = samples;
  for (int k = 0; k < grid.L; ++k) {
    const int m = grid.mirror(k);
    const double a = vals[k];
    const double b = vals[m];
    if (symmetrize) {
      vals[k] = vals[m] = 0.5 * (a + b);
    } else if (std::abs(a - b) > 1e-12 * std::max(a, b)) {
      throw Error(ErrorCode::AsymmetricProfile,
                  "samples at v=" + std::to_string(grid.v_centers[k]) + " and its mirror differ");
    } else {
      vals[m] = a;
    }
  }

  Eigen::VectorXd scaled = grid.dv * vals;
  const double mass = pairwise_sum(scaled.data(), static_cast<std::size_t>(nv));
  vals /= mass;

  VelocityProfile p;
  p.values = vals;
  Eigen::VectorXd w2(nv), w4(nv);
  for (int k = 0; k < nv; ++k) {
    const double v2 = grid.v_centers[k] * grid.v_centers[k];
    w2[k] = grid.dv * v2 * vals[k];
    w4[k] = grid.dv * v2 * v2 * vals[k];
  }
  p.D_delta = pairwise_sum(w2.data(), static_cast<std::size_t>(nv));
  p.Q_delta = pairwise_sum(w4.data(), static_cast<std::size_t>(nv));
  return p;
}

VelocityProfile discretize_profile(const std::function<double(double)>& profile, const GridSpec& grid,
                                   bool symmetrize) {
  Eigen::VectorXd samples(grid.nv());
  for (int k = 0; k < grid.nv(); ++k) samples[k] = profile(grid.v_centers[k]);
  return profile_from_samples(samples, grid, symmetrize);
}

namespace profiles {

double gaussian(double v) { return std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi); }

double heavy_tailed(double v) {
  const double v2 = v * v;
  return 1.0 / (1.0 + v2 * v2);
}

double oscillating(double v) {
  const double v2 = v * v;
  return (std::cos(std::numbers::pi * v) + 1.1) / (1.0 + v2 * v2 * v2);
}

}  // namespace profiles

}  // namespace grkin
