#pragma once

// Scalar training objectives: unsupervised sensing and communication losses,
// the batch ISAC combination and the supervised baselines.

#include <span>
#include <vector>

#include "isaccal/channel.hpp"
#include "isaccal/scenario.hpp"
#include "isaccal/sensing_rx.hpp"

namespace isaccal {

enum class SensingLossKind { adm_max, omp_residual };

SensingLossKind parse_sensing_loss(const std::string& name);
std::string to_string(SensingLossKind k);

/// -max_{i,j} ADM(Y).
double loss_adm_max(const CMat& Y, const Dictionaries& dict);

/// ||Y^(iters)||_F^2 after exactly `iters` OMP iterations with the guard disabled.
double loss_omp_residual(const CMat& Y, const Dictionaries& dict, int iters);

/// -||y||^2.
double loss_comm_energy(const CommObservation& obs);

struct SampleLoss {
  double sensing = 0.0;
  double comm = 0.0;
  double eta = 1.0;

  double weighted() const { return eta * sensing + (1.0 - eta) * comm; }
};

struct LossValue {
  double value = 0.0;
  double sensing = 0.0; // batch mean of the sensing terms
  double comm = 0.0;    // batch mean of the communication terms
  double eta = 0.0;     // batch mean of eta
};

/// (1/B) sum_j [eta_j L_r,j + (1 - eta_j) L_c,j].
LossValue isac_batch_loss(std::span<const SampleLoss> samples);

/// Point target used by the supervised sensing loss (true continuous angle and delay).
struct TargetCell {
  double angle = 0.0;
  double delay = 0.0;
};

std::vector<TargetCell> target_cells(const SensingScene& scene);

/// -(1/T) sum_t |a_rx(theta_t; rx)^H Y conj(x . rho(tau_t))|^2; zero when T = 0.
double slcb_sensing_loss(const CMat& Y, std::span<const TargetCell> targets, const LearnableParams& rx, const CVec& x,
                         const WaveformConfig& w);

/// Squared distances below this are clamped before the log.
inline constexpr double kCceDistanceFloor = 1e-30;

/// Cross entropy between the transmitted symbols and softmax(-log |y_s - kappa_s x|^2),
/// averaged over subcarriers.
double slcb_comm_loss(const CommObservation& obs, const std::vector<int>& true_indices, Constellation c);

} // namespace isaccal
