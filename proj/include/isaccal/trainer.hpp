#pragma once

// Projected online gradient descent over the steering parameters: batch
// simulation, loss and gradient assembly, Adam with split learning rates,
// plateau scheduling and projection onto the feasible set.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "isaccal/gradients.hpp"
#include "isaccal/losses.hpp"
#include "isaccal/scenario.hpp"

namespace isaccal {

enum class EtaMode { fixed, tied };
enum class TrainMode { unsupervised, slcb, slcb_perturbed, none };

EtaMode parse_eta_mode(const std::string& s);
std::string to_string(EtaMode m);
TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode m);

struct TrainConfig {
  int batch = 128;
  int iterations = 800;
  double lr_gains = 1e-2;
  double lr_positions = 1e-4;
  double scheduler_factor = 0.5;
  int scheduler_patience = 500;
  int scheduler_cooldown = 500;
  double scheduler_threshold = 1e-4;
  double sigma_over_lambda = 5.0;
  TrainMode mode = TrainMode::unsupervised;
  SensingLossKind loss_kind = SensingLossKind::omp_residual;
  int omp_iters = 1;
  EtaMode eta_mode = EtaMode::tied;
  double eta_value = 1.0;
  bool train_tx = true;
  bool train_rx = true;
  bool tx_known = false; // start (and, if not trained, stay) at the true TX impairments
  int threads = 1;

  void validate() const;
};

/// Everything a training or evaluation run needs besides the training knobs.
struct Environment {
  WaveformConfig waveform;
  ScenarioConfig scenario;
  Constellation constellation = Constellation::qpsk;
  double noise_psd_sensing = 1.0;
  double noise_psd_comm = 1.0;
  std::vector<double> precoder_grid; // angles for the sector precoders
  std::vector<double> angle_grid;    // sensing dictionary angles
  int n_tau = 128;

  double sensing_noise_variance() const {
    return noise_psd_sensing * waveform.num_subcarriers * waveform.subcarrier_spacing;
  }
  double comm_noise_variance() const {
    return noise_psd_comm * waveform.num_subcarriers * waveform.subcarrier_spacing;
  }
};

/// Orders omegas ascending (splitting ties by 1e-12) and clamps |beta| <= 1 keeping the phase.
LearnableParams project(const LearnableParams& p);
ParamsPair project(const ParamsPair& p);

struct AdamState {
  RVec m;
  RVec v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(Eigen::Index n);
};

/// One bias-corrected Adam update of x with per-coordinate learning rates.
void adam_step(AdamState& state, RVec& x, const RVec& grad, const RVec& lrs);

/// Reduce-on-plateau in min mode with a relative threshold.
struct PlateauScheduler {
  double factor = 0.5;
  int patience = 500;
  int cooldown = 500;
  double threshold = 1e-4;

  double best = std::numeric_limits<double>::infinity();
  int num_bad = 0;
  int cooldown_counter = 0;
  double multiplier = 1.0;
  int reductions = 0;

  /// Feeds one loss value; returns the current learning-rate multiplier.
  double step(double loss);
};

struct TrainLogRow {
  int iter = 0;
  double loss = 0.0;
  double sens_loss = 0.0;
  double comm_loss = 0.0;
  double lr_mult_gain = 1.0;
  double lr_mult_pos = 1.0;
  double grad_norm_tx = 0.0;
  double grad_norm_rx = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  static const char* csv_header();
  void write_csv(std::ostream& os) const;
};

struct TrainState {
  ParamVector params;
  AdamState adam;
  PlateauScheduler scheduler;
  int iteration = 0; // completed iterations
};

/// Initial parameters: ideal arrays, or the true TX array when tx_known.
ParamsPair initial_params(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth);

TrainState initial_state(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth);

using TrainObserver = std::function<void(const TrainState&, const TrainLogRow&)>;

struct TrainResult {
  ParamsPair params;
  TrainLog log;
  TrainState state;
};

/// Runs the remaining iterations of `state` (fresh state when omitted).
TrainResult train(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth, std::uint64_t seed,
                  const TrainObserver& observer = {});
TrainResult train(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth, std::uint64_t seed,
                  TrainState state, const TrainObserver& observer = {});

/// Per-sample random context shared by training and evaluation.
struct SampleContext {
  Sector sensing_sector;
  Sector comm_sector;
  double omega_r = 0.5;
  SensingScene sensing;
  CommScene comm;
  SymbolBlock symbols;
};

/// Draws sectors, omega_r ~ U[0, 1], scenes and symbols from rng.
SampleContext draw_context(const Environment& env, Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace isaccal
