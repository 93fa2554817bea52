#pragma once

// Built-in consistency checks: finite-difference validation of every
// analytic gradient path on small random instances, the noiseless OMP
// recovery case and basic GOSPA identities.

#include <cstdint>
#include <string>
#include <vector>

#include "isaccal/config.hpp"

namespace isaccal {

struct CheckResult {
  std::string name;
  double value = 0.0;     // worst error observed
  double tolerance = 0.0;
  bool passed = false;
};

/// Small desk-derived configuration (K antennas, S subcarriers) for gradient checks.
Config small_config(int num_antennas = 4, int num_subcarriers = 8);

/// Worst central-difference relative error of each gradient path over `instances` random instances.
std::vector<CheckResult> gradient_checks(std::uint64_t seed, int instances);

/// Noiseless single on-grid target with matched dictionaries.
struct RecoveryCheck {
  bool cell_correct = false;
  double gain_rel_error = 0.0;
  double residual_rel = 0.0;
};
RecoveryCheck exact_recovery_check(std::uint64_t seed);

std::vector<CheckResult> run_selftest(std::uint64_t seed);

} // namespace isaccal
