#pragma once

// Subcarrier-wise maximum-likelihood symbol detection at the UE.

#include <vector>

#include "isaccal/channel.hpp"
#include "isaccal/scenario.hpp"

namespace isaccal {

struct DetectionResult {
  CVec symbols;             // x_hat
  std::vector<int> indices; // into constellation_points()
  RMat metrics;             // S x |X|, |y_s - kappa_s x|^2
  bool zero_csi = false;    // some kappa_s == 0; decisions there are the tie-break
};

/// x_hat_s = argmin_x |y_s - kappa_s x|^2, ties resolved by the lowest constellation index.
DetectionResult ml_detect(const CommObservation& obs, Constellation c);

} // namespace isaccal
