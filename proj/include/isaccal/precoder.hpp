#pragma once

// Sector precoders built from parameterized steering vectors, the ISAC power
// split, and the Gaussian perturbation used for gradient-free training.

#include <vector>

#include "isaccal/core.hpp"
#include "isaccal/scenario.hpp"

namespace isaccal {

/// Uniform angle grid over [-fov, fov] with the given step (both in radians).
std::vector<double> make_angle_grid(double field_of_view, double step);

/// Grid indices inside the sector; falls back to the nearest grid point when
/// the sector holds none.
std::vector<int> sector_indices(const Sector& sector, const std::vector<double>& grid);

/// Unit-norm conjugate sum of steering vectors over the grid points inside the sector.
CVec sector_precoder(const Sector& sector, const std::vector<double>& grid, const LearnableParams& tx,
                     double wavelength);

struct Precoder {
  CVec weights;
  double power = 0.0;
};

/// sqrt(P) (sqrt(w) fs + sqrt(1-w) fc) / ||sqrt(w) fs + sqrt(1-w) fc||.
Precoder isac_precoder(const CVec& f_sensing, const CVec& f_comm, double omega_r, double power);

struct PerturbedPrecoder {
  CVec weights; // f + eps
  CVec mean;    // f
  double sigma = 0.0;
};

/// f + eps with eps ~ CN(0, sigma^2 I).
PerturbedPrecoder perturb(const Precoder& f, double sigma, Rng& rng);

/// Gradient over the real parameters of log p(f~) for the Gaussian perturbation:
/// (2 / sigma^2) Re{J^H (f~ - f)}, with J = df/dparams (complex K x n).
RVec log_pdf_grad(const PerturbedPrecoder& pp, const CMat& jacobian);

/// Draws eps ~ CN(0, sigma^2 I) of length n.
CVec complex_gaussian(Eigen::Index n, double sigma, Rng& rng);

} // namespace isaccal
