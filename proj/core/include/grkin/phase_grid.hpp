#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace grkin {

/// Cell values on the spatial torus, one per cell.
using SpatialField = Eigen::VectorXd;

/// Cell averages on the phase-space grid: N rows (space) by 2L columns
/// (velocity). Row-major so that entry (i, k) sits at offset i * 2L + k.
using PhaseField = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform phase-space grid on the torus [0, |T|) x [-v*, v*].
///
/// Velocity cells are stored with 0-based indices k = 0..2L-1. The signed
/// index used in the analysis is j = k - L + 1, so j runs over -L+1..L and
/// the mirror j -> -j+1 becomes k -> 2L-1-k.
struct GridSpec {
  double torus_length = 0.0;
  int N = 0;
  int L = 0;
  double v_star = 0.0;
  double dx = 0.0;
  double dv = 0.0;
  Eigen::VectorXd x_centers;     // N
  Eigen::VectorXd v_interfaces;  // 2L + 1
  Eigen::VectorXd v_centers;     // 2L

  int nv() const { return 2 * L; }
  std::size_t cells() const { return static_cast<std::size_t>(N) * static_cast<std::size_t>(nv()); }
  int mirror(int k) const { return 2 * L - 1 - k; }
  int signed_index(int k) const { return k - L + 1; }
  int storage_index(int j) const { return j + L - 1; }
};

GridSpec build_grid(double torus_length, int N, int L, double v_star);

enum class Gradient { Centered, Forward, Backward };

SpatialField discrete_gradient(const SpatialField& u, Gradient variant, const GridSpec& grid);

/// D+D- u = (u_{i+1} - 2u_i + u_{i-1}) / dx^2, which also equals D-D+ u.
SpatialField second_difference(const SpatialField& u, const GridSpec& grid);

/// Compensation-free pairwise summation; deterministic for a given length.
double pairwise_sum(const double* data, std::size_t n);

/// <u, w>_2 = sum_i dx u_i w_i.
double inner_l2(const SpatialField& u, const SpatialField& w, const GridSpec& grid);
double norm_l2(const SpatialField& u, const GridSpec& grid);

/// Sharp constant of ||u||_2 <= C_P ||D^c u||_2 for mean-zero u.
double poincare_constant(const GridSpec& grid);

struct VelocityProfile {
  Eigen::VectorXd values;  // normalized so that sum dv * values = 1
  double D_delta = 0.0;    // sum dv v^2 chi
  double Q_delta = 0.0;    // sum dv v^4 chi
};

/// Samples `profile` at the velocity midpoints and normalizes to unit mass.
/// Mirror samples must agree to a relative 1e-12 unless `symmetrize` is set,
/// in which case mirror pairs are averaged.
VelocityProfile discretize_profile(const std::function<double(double)>& profile, const GridSpec& grid,
                                   bool symmetrize = false);

/// Same as discretize_profile but from raw cell samples (length 2L).
VelocityProfile profile_from_samples(const Eigen::VectorXd& samples, const GridSpec& grid,
                                     bool symmetrize = false);

namespace profiles {
double gaussian(double v);
double heavy_tailed(double v);
double oscillating(double v);
}  // namespace profiles

}  // namespace grkin
