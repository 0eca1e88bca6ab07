#pragma once

#include "grkin/linear_scheme.hpp"

#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace grkin {

/// Solves D^c D^c phi = -u with sum dx phi = 0. The wide-stencil matrix is
/// bordered by the mean constraint and factorized once per grid.
class PoissonSolver {
 public:
  explicit PoissonSolver(const GridSpec& grid);
  ~PoissonSolver();
  PoissonSolver(PoissonSolver&&) noexcept;
  PoissonSolver& operator=(PoissonSolver&&) noexcept;

  /// Throws NonZeroMean when |sum dx u| exceeds 1e-10 max(1, sum dx |u|).
  SpatialField solve(const SpatialField& u) const;

 private:
  struct Impl;
  GridSpec grid_;
  std::unique_ptr<Impl> impl_;
};

SpatialField solve_discrete_poisson(const SpatialField& u, const GridSpec& grid);

/// (phi_{i+2} - 2 phi_i + phi_{i-2}) / (4 dx^2).
SpatialField wide_laplacian(const SpatialField& phi, const GridSpec& grid);

struct PotentialState {
  SpatialField phi_current;
  std::optional<SpatialField> phi_previous;
};

struct EntropyValue {
  double value = 0.0;
  bool partial = false;  // third term omitted (no previous potential)
};

/// H = 1/2 ||F||^2 + delta <J_h, D^c phi^n> + delta/(2 dt) ||D^c phi^n - D^c phi^{n-1}||^2.
EntropyValue modified_entropy(const SpeciesPair& F, const PotentialState& pot, double delta, double dt,
                              const ConstantsLedger& ledger, const VelocityProfile& chi1,
                              const VelocityProfile& chi2, const GridSpec& grid, double rho, double D0);

struct DecayFit {
  double kappa = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  double t_lo = 0.0;
  double t_hi = 0.0;
};

/// Least-squares line through (t, log value) on t in [t_lo, t_hi]. Points at
/// or below `floor` are skipped.
DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& value, double t_lo, double t_hi,
                        double floor = 1e-14);

/// t_hi is the first time the value drops to 1e3 * floor (or the last time);
/// t_lo sits 20% of the way from the first time to t_hi.
std::pair<double, double> default_fit_window(const std::vector<double>& t, const std::vector<double>& value,
                                             double floor = 1e-14);

struct TimeSeriesRecord {
  double t = 0.0;
  double weighted_norm = 0.0;
  double rho_f_l2 = 0.0;
  double rho_g_l2 = 0.0;
  std::optional<double> entropy;
  double mass_difference = 0.0;
  bool bounds_pass = false;
  double dt_used = 0.0;
  std::optional<int> newton_iterations;
};

}  // namespace grkin
