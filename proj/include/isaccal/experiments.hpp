#pragma once

// Test-time evaluation: sensing operating points, symbol error rates and
// precoder/ADM diagnostics used by the command-line driver.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isaccal/metrics.hpp"
#include "isaccal/sensing_rx.hpp"
#include "isaccal/trainer.hpp"

namespace isaccal {

struct EvalOptions {
  int samples = 10000;
  std::uint64_t seed = 0;
  std::optional<double> omega_r; // fixed split; drawn U[0, 1] per sample when empty
  int max_iter = 6;
  int threads = 1;
  bool targets = true; // false: target-free scenes (threshold calibration)
};

/// OMP output of one test sample, run once at delta = 0 so that any threshold can be applied afterwards.
struct SensingRecord {
  std::vector<Point2> truth;
  std::vector<Detection> detections;
  std::vector<double> guards;
};

struct SensingEval {
  std::vector<SensingRecord> records;
  int t_max = 0;
};

SensingEval evaluate_sensing(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                             const EvalOptions& opt);

struct OperatingPoint {
  double delta = 0.0;
  double p_fa = 0.0;
  double p_md = 0.0;
  double gospa = 0.0;
  long detections = 0;
};

OperatingPoint operating_point(const SensingEval& eval, double delta, const GospaConfig& gospa_cfg);

/// Smallest threshold whose false-alarm rate on this evaluation set is at most target_pfa.
OperatingPoint operating_point_at_pfa(const SensingEval& eval, double target_pfa, const GospaConfig& gospa_cfg);

/// Threshold calibrated on target-free scenes.
double noise_threshold(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                       const EvalOptions& opt, double target_pfa);

struct SerResult {
  double ser = 0.0;
  long symbols = 0;
  long errors = 0;
};

SerResult evaluate_ser(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                       const EvalOptions& opt);

/// Response |a_tx(theta; truth)^T f(params)|^2 in dB over the precoder grid.
RVec precoder_response_db(const Environment& env, const LearnableParams& tx_params, const ArrayImpairments& tx_truth,
                          const Sector& sensing, const Sector& comm, double omega_r);

/// A fixed noiseless multi-target instance and its ADM for the given RX parameters.
struct AdmSnapshot {
  std::vector<double> angles;
  std::vector<double> delays;
  RMat map;
  OmpResult omp;
};

AdmSnapshot adm_snapshot(const Environment& env, const LearnableParams& rx_params, const ArrayPair& truth,
                         const SampleContext& ctx, double noise_psd, std::uint64_t noise_seed, int max_iter);

/// Context with fixed sectors and targets used by the ADM dump.
SampleContext reference_context(const Environment& env, std::uint64_t seed);

} // namespace isaccal
