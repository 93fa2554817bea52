#include "isaccal/precoder.hpp"

#include <cmath>
#include <limits>

namespace isaccal {

std::vector<double> make_angle_grid(double field_of_view, double step) {
  if (!(step > 0.0)) fail(ErrorCode::config, "angle grid step must be > 0");
  const int n = static_cast<int>(std::floor(2.0 * field_of_view / step + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = -field_of_view + i * step;
  return grid;
}

std::vector<int> sector_indices(const Sector& sector, const std::vector<double>& grid) {
  constexpr double eps = 1e-12;
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(grid.size()); ++i)
    if (grid[i] >= sector.min - eps && grid[i] <= sector.max + eps) idx.push_back(i);
  if (idx.empty() && !grid.empty()) {
    int best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
      const double d = std::abs(grid[i] - sector.center());
      if (d < dist) {
        dist = d;
        best = i;
      }
    }
    idx.push_back(best);
  }
  return idx;
}

CVec sector_precoder(const Sector& sector, const std::vector<double>& grid, const LearnableParams& tx,
                     double wavelength) {
  CVec sum = CVec::Zero(tx.size());
  for (int i : sector_indices(sector, grid)) sum += steering_vector(grid[i], tx, wavelength).conjugate();
  const double n = sum.norm();
  if (!(n > 0.0)) fail(ErrorCode::numerical, "sector_precoder: zero steering sum (all gains zero?)");
  return sum / n;
}

Precoder isac_precoder(const CVec& f_sensing, const CVec& f_comm, double omega_r, double power) {
  if (omega_r < 0.0 || omega_r > 1.0) fail(ErrorCode::invalid_argument, "isac_precoder: omega_r outside [0, 1]");
  const CVec u = std::sqrt(omega_r) * f_sensing + std::sqrt(1.0 - omega_r) * f_comm;
  const double n = u.norm();
  if (n < 1e-9) fail(ErrorCode::numerical, "isac_precoder: degenerate combination of sector precoders");
  return {std::sqrt(power) * u / n, power};
}

CVec complex_gaussian(Eigen::Index n, double sigma, Rng& rng) {
  std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
  CVec e(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double re = g(rng);
    const double im = g(rng);
    e[k] = cplx{re, im};
  }
  return e;
}

PerturbedPrecoder perturb(const Precoder& f, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) fail(ErrorCode::invalid_argument, "perturb: sigma must be > 0");
  return {f.weights + complex_gaussian(f.weights.size(), sigma, rng), f.weights, sigma};
}

RVec log_pdf_grad(const PerturbedPrecoder& pp, const CMat& jacobian) {
  const CVec diff = pp.weights - pp.mean;
  return (2.0 / (pp.sigma * pp.sigma)) * (jacobian.adjoint() * diff).real();
}

} // namespace isaccal
