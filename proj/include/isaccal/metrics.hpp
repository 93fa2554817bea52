#pragma once

// Detection, localization and communication metrics over test batches.

#include <span>
#include <string>
#include <vector>

#include "isaccal/core.hpp"
#include "isaccal/sensing_rx.hpp"

namespace isaccal {

/// True and estimated target counts of one test sample.
struct CountPair {
  int truth = 0;
  int estimated = 0;
};

/// 1 - sum min(T, T_hat) / sum T; NaN when no sample holds a target.
double pmd(std::span<const CountPair> batch);

/// sum (max(T, T_hat) - T) / sum (T_max - T); NaN when the denominator is zero.
double pfa(std::span<const CountPair> batch, int t_max);

struct GospaConfig {
  double cutoff = 33.75; // gamma, m
  double mu = 2.0;
  double order = 2.0;    // p

  void validate() const;
};

/// GOSPA distance by enumeration of assignments (sets of at most a handful of points).
double gospa(std::span<const Point2> truth, std::span<const Point2> estimates, const GospaConfig& cfg);

/// Fraction of mismatched symbols.
double ser(std::span<const int> sent, std::span<const int> detected);

/// 10 log10 |a_tx(theta)^T f|^2 over the grid.
RVec precoder_response(const CVec& gains, const RVec& positions, const CVec& f, std::span<const double> angles,
                       double wavelength);

struct MetricsReport {
  double p_md = 0.0;
  double p_fa = 0.0;
  double gospa_mean = 0.0;
  double ser = 0.0;
  long samples = 0;
  long targets = 0;
  long detections = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

} // namespace isaccal
