#pragma once

// Multi-target estimation from the sensing observation: angle/delay
// dictionaries, the angle-delay map (ADM) and orthogonal matching pursuit.

#include <memory>
#include <span>
#include <vector>

#include "isaccal/core.hpp"

namespace isaccal {

/// Columns are a_rx(theta_i; params) over the angle grid. Shared read-only
/// between all samples that use the same receive parameters.
struct AngularDictionary {
  std::vector<double> angles;
  CMat atoms; // K x N_theta

  static std::shared_ptr<const AngularDictionary> build(std::vector<double> angles, const LearnableParams& rx,
                                                        double wavelength);
};

struct Dictionaries {
  std::shared_ptr<const AngularDictionary> angular;
  std::vector<double> delays;
  CMat delay_atoms; // S x N_tau, column j = x . rho(tau_j)
  double subcarrier_spacing = 0.0;

  const CMat& angle_atoms() const { return angular->atoms; }
  const std::vector<double>& angles() const { return angular->angles; }
  Eigen::Index num_angles() const { return angular->atoms.cols(); }
  Eigen::Index num_delays() const { return delay_atoms.cols(); }
};

/// Uniform delay grid over [2 R_min / c, 2 R_max / c] with n points.
std::vector<double> make_delay_grid(double range_min, double range_max, int n);

/// Delay dictionary for symbols x on the given grid, reusing a shared angular dictionary.
Dictionaries attach_delays(std::shared_ptr<const AngularDictionary> angular, std::vector<double> delays,
                           const CVec& x, double subcarrier_spacing);

Dictionaries build_dictionaries(std::vector<double> angles, std::vector<double> delays, const LearnableParams& rx,
                                const CVec& x, double wavelength, double subcarrier_spacing);

/// Complex matched-filter field Phi_a^H Y conj(Phi_d), N_theta x N_tau.
CMat adm_field(const CMat& Y, const Dictionaries& dict);

/// Angle-delay map |Phi_a^H Y conj(Phi_d)|^2.
RMat adm(const CMat& Y, const Dictionaries& dict);

struct Detection {
  double angle = 0.0;
  double delay = 0.0;
  int angle_index = 0;
  int delay_index = 0;
};

struct OmpResult {
  std::vector<Detection> detections;
  CVec gains;                         // joint least-squares refit of the final support
  std::vector<double> residual_norms; // ||Y^(i)||_F^2 for i = 0..I
  std::vector<double> guard_values;   // max ADM of Y^(i) each time the loop guard was evaluated
  CMat residual;                      // Y^(I)

  int size() const { return static_cast<int>(detections.size()); }
};

/// Orthogonal matching pursuit over the angle-delay dictionary. Detects while
/// the residual ADM maximum exceeds delta, for at most max_iter iterations.
OmpResult omp(const CMat& Y, const Dictionaries& dict, double delta, int max_iter);

/// Number of detections OMP makes at threshold delta, given the guard values of
/// a run at a lower threshold (the detection sequence is a prefix).
int detections_at(std::span<const double> guard_values, double delta);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Range c tau / 2 and position (R sin theta, R cos theta); boresight along +y.
Point2 position_from(double angle, double delay);
std::vector<Point2> positions_from(const OmpResult& result);
std::vector<Point2> positions_from(std::span<const Detection> detections);

/// Threshold whose false-alarm rate on target-free observations does not exceed
/// target_pfa; guard sequences come from OMP runs at delta = 0 on noise only.
double calibrate_threshold(std::span<const std::vector<double>> noise_guard_values, double target_pfa, int t_max);

} // namespace isaccal
