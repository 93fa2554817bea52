#pragma once

// Forward simulation of the impaired sensing and communication channels.
// Only outputs are exposed: nothing here offers derivatives, and training code
// must treat these functions as black boxes.

#include "isaccal/core.hpp"
#include "isaccal/scenario.hpp"

namespace isaccal {

struct SensingObservation {
  CMat Y; // K x S
};

struct CommObservation {
  CVec y;   // S
  CVec csi; // kappa, S
};

/// Y = sum_t alpha_t a_rx(theta_t) a_tx(theta_t)^T f [x . rho(tau_t)]^T + W,
/// with W ~ CN(0, N0 S df) entrywise. Arrays are the TRUE impairments.
SensingObservation sensing_forward(const SensingScene& scene, const CVec& f, const CVec& x, const ArrayPair& truth,
                                   const WaveformConfig& w, double noise_psd, Rng& rng);

/// y = sum_t alpha_t a_tx(theta_t)^T f [x . rho(tau_t)] + w and the CSI kappa
/// the UE estimates from pilots (so y = kappa . x + w).
CommObservation comm_forward(const CommScene& scene, const CVec& f, const CVec& x, const ArrayImpairments& tx_truth,
                             const WaveformConfig& w, double noise_psd, Rng& rng);

} // namespace isaccal
