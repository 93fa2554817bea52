#pragma once

// Run configuration: a JSON tree with waveform, scenario, precoder, sensing,
// loss, train and eval sections, plus the built-in presets.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "isaccal/metrics.hpp"
#include "isaccal/trainer.hpp"

namespace isaccal {

struct EvalConfig {
  int test_samples = 10000;
  int noise_samples = 1000;
  double target_pfa = 1e-2;
  double omega_r = 0.5;
  int max_iter_slack = 3;
  double gospa_mu = 2.0;
  double gospa_order = 2.0;
};

struct Config {
  nlohmann::json tree;
  WaveformConfig waveform;
  ScenarioConfig scenario;
  Constellation constellation = Constellation::qpsk;
  double grid_step_deg = 1.0;
  int n_theta = 181;
  int n_tau_per_subcarrier = 2;
  TrainConfig train;
  EvalConfig eval;

  /// Grids and noise levels derived from the configuration.
  Environment environment() const;
  /// Same environment with the sensing noise chosen for another maximum achievable sensing SNR.
  Environment environment_at_snr(double snr_s_db) const;
  GospaConfig gospa() const;
  int eval_max_iter() const { return scenario.t_max + eval.max_iter_slack; }

  /// Hex digest of the canonical JSON tree.
  std::string hash() const;
};

std::vector<std::string> preset_names();
nlohmann::json preset_tree(const std::string& name);

/// Parses a complete tree. A missing key is a config error naming the key.
Config config_from_tree(const nlohmann::json& tree);

/// Loads a JSON file; "extends": "<preset>" merges the file over that preset.
Config load_config(const std::string& path);
Config load_preset(const std::string& name);

/// Applies "section.key=value" overrides (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& tree, const std::string& assignment);

} // namespace isaccal
