#include "grkin/diagnostics.hpp"

#include "grkin/errors.hpp"

#include <algorithm>
#include <cmath>

namespace grkin {

struct PoissonSolver::Impl {
  SparseMatrix bordered;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

PoissonSolver::PoissonSolver(const GridSpec& grid) : grid_(grid), impl_(std::make_unique<Impl>()) {
  const int N = grid.N;
  if (N < 3 || N % 2 == 0) throw Error(ErrorCode::EvenN, "Poisson solve needs odd N");
  const double c = 1.0 / (4.0 * grid.dx * grid.dx);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < N; ++i) {
    trip.emplace_back(i, (i + 2) % N, c);
    trip.emplace_back(i, i, -2.0 * c);
    trip.emplace_back(i, (i + N - 2) % N, c);
    // Border: Lagrange multiplier column and the mean-zero row.
    trip.emplace_back(i, N, 1.0);
    trip.emplace_back(N, i, grid.dx);
  }
  impl_->bordered.resize(N + 1, N + 1);
  impl_->bordered.setFromTriplets(trip.begin(), trip.end());
  impl_->bordered.makeCompressed();
  impl_->lu.compute(impl_->bordered);
  if (impl_->lu.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularOperator, "Poisson factorization failed: " + impl_->lu.lastErrorMessage());
  }
}

PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;
PoissonSolver& PoissonSolver::operator=(PoissonSolver&&) noexcept = default;

SpatialField PoissonSolver::solve(const SpatialField& u) const {
  const int N = grid_.N;
  const SpatialField ones = SpatialField::Ones(N);
  const double mean = inner_l2(u, ones, grid_);
  const double scale = std::max(1.0, inner_l2(u.cwiseAbs(), ones, grid_));
  if (std::abs(mean) > 1e-10 * scale) {
    throw Error(ErrorCode::NonZeroMean, "Poisson right-hand side has nonzero mean " + std::to_string(mean));
  }
  Eigen::VectorXd rhs(N + 1);
  rhs.head(N) = -(u.array() - mean / grid_.torus_length).matrix();
  rhs[N] = 0.0;
  Eigen::VectorXd x = impl_->lu.solve(rhs);
  x += impl_->lu.solve(rhs - impl_->bordered * x);
  return x.head(N);
}

SpatialField solve_discrete_poisson(const SpatialField& u, const GridSpec& grid) { return PoissonSolver(grid).solve(u); }

SpatialField wide_laplacian(const SpatialField& phi, const GridSpec& grid) {
  const int N = grid.N;
  SpatialField out(N);
  for (int i = 0; i < N; ++i) {
    out[i] = (phi[(i + 2) % N] - 2.0 * phi[i] + phi[(i + N - 2) % N]) / (4.0 * grid.dx * grid.dx);
  }
  return out;
}

EntropyValue modified_entropy(const SpeciesPair& F, const PotentialState& pot, double delta, double dt,
                              const ConstantsLedger& ledger, const VelocityProfile& chi1,
                              const VelocityProfile& chi2, const GridSpec& grid, double rho, double D0) {
  if (!(delta > 0.0 && delta < ledger.delta_ceiling)) {
    throw Error(ErrorCode::DeltaOutOfRange, "delta must lie in (0, min(delta_1, delta_2, delta_3))");
  }
  const double nrm2 = weighted_inner(F, F, chi1, chi2, rho, grid);
  const Moments m = moments_uJS(F.f - F.g, grid, D0);
  const SpatialField grad = discrete_gradient(pot.phi_current, Gradient::Centered, grid);
  EntropyValue h;
  h.value = 0.5 * nrm2 + delta * inner_l2(m.J, grad, grid);
  if (pot.phi_previous) {
    const SpatialField d = grad - discrete_gradient(*pot.phi_previous, Gradient::Centered, grid);
    h.value += delta / (2.0 * dt) * inner_l2(d, d, grid);
  } else {
    h.partial = true;
  }
  return h;
}

DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& value, double t_lo, double t_hi,
                        double floor) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < t.size() && k < value.size(); ++k) {
    if (t[k] < t_lo || t[k] > t_hi) continue;
    if (!(value[k] > 0.0)) {
      throw Error(ErrorCode::NonPositiveValues, "decay fit needs positive values");
    }
    if (value[k] <= floor) continue;
    xs.push_back(t[k]);
    ys.push_back(std::log(value[k]));
  }
  if (xs.size() < 5) {
    throw Error(ErrorCode::InsufficientData,
                "decay fit needs at least 5 points in the window, got " + std::to_string(xs.size()));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::InsufficientData, "decay fit needs distinct times");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double e = ys[k] - (intercept + slope * xs[k]);
    ss_res += e * e;
  }
  DecayFit fit;
  fit.kappa = -slope;
  fit.prefactor = std::exp(intercept);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.points = xs.size();
  fit.t_lo = t_lo;
  fit.t_hi = t_hi;
  return fit;
}

std::pair<double, double> default_fit_window(const std::vector<double>& t, const std::vector<double>& value,
                                             double floor) {
  if (t.empty()) throw Error(ErrorCode::InsufficientData, "empty series");
  double t_hi = t.back();
  for (std::size_t k = 0; k < t.size() && k < value.size(); ++k) {
    if (value[k] <= 1e3 * floor) {
      t_hi = t[k];
      break;
    }
  }
  const double t_lo = t.front() + 0.2 * (t_hi - t.front());
  return {t_lo, t_hi};
}

}  // namespace grkin
