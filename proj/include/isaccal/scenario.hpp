#pragma once

// Random sensing/communication scenes, angular sectors and symbol blocks.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isaccal/core.hpp"

namespace isaccal {

struct Sector {
  double min = 0.0; // rad
  double max = 0.0; // rad

  double center() const { return 0.5 * (min + max); }
  double width() const { return max - min; }
  bool contains(double theta) const { return theta >= min && theta <= max; }
};

struct ScenarioConfig {
  int t_max = 3;                 // max sensing targets
  int t_tilde_max = 6;           // max communication paths
  double rcs_mean = 1.0;         // m^2
  double snr_s_db = -3.0;
  double snr_c_db = 14.4;
  double range_min = 10.0;       // sensing range support, m
  double range_max = 43.75;
  double ue_range_min = 10.0;    // UE range support, m
  double ue_range_max = 200.0;
  double cp_fraction = 0.25;     // T_cp = cp_fraction / df
  double sector_center_max = deg2rad(60.0);
  double sector_width_min = deg2rad(10.0);
  double sector_width_max = deg2rad(20.0);
  double scatterer_min_distance = 1.0; // m, scatterer-to-UE

  void validate() const;
  double cyclic_prefix(const WaveformConfig& w) const { return cp_fraction / w.subcarrier_spacing; }
};

struct Target {
  double angle = 0.0;      // rad
  double range = 0.0;      // m
  double rcs = 1.0;        // m^2
  double gain_phase = 0.0; // rad

  double delay() const { return 2.0 * range / kSpeedOfLight; }
  /// Radar-equation magnitude with the stored phase.
  cplx gain(double wavelength) const;
};

/// |alpha|^2 = rcs lambda^2 / ((4 pi)^3 R^4).
double radar_gain_sq(double rcs, double range, double wavelength);

struct SensingScene {
  std::vector<Target> targets;
  Sector sector;
  double range_min = 0.0;
  double range_max = 0.0;
};

struct CommPath {
  double angle = 0.0; // departure angle, rad
  cplx gain;
  double delay = 0.0; // s
};

struct CommScene {
  std::vector<CommPath> paths; // paths[0] is line of sight
  double ue_range = 0.0;
  Sector sector;
};

enum class Constellation { bpsk, qpsk, qam16 };

Constellation parse_constellation(const std::string& name);
std::string to_string(Constellation c);
/// Unit average energy points; QPSK is (+-1 +-j)/sqrt(2).
std::span<const cplx> constellation_points(Constellation c);

struct SymbolBlock {
  CVec symbols;
  std::vector<int> indices; // into constellation_points()
  Constellation constellation = Constellation::qpsk;
};

/// Sensing and communication sectors, drawn independently and clamped to the field of view.
std::pair<Sector, Sector> draw_sectors(const ScenarioConfig& cfg, double field_of_view, Rng& rng);

SensingScene draw_sensing_scene(const ScenarioConfig& cfg, const Sector& sector, Rng& rng);

CommScene draw_comm_scene(const ScenarioConfig& cfg, const WaveformConfig& w, const Sector& sector, Rng& rng);

SymbolBlock draw_symbols(int num_subcarriers, Constellation c, Rng& rng);

enum class LinkMode { sensing, comm };

/// E[1/R^4] for R ~ U[a, b].
double mean_inverse_fourth_power(double a, double b);

/// Expected |alpha|^2 entering the maximum achievable SNR of a link.
double expected_gain_sq(const ScenarioConfig& cfg, const WaveformConfig& w, LinkMode mode);

/// N0 such that P K E[|alpha|^2] / (N0 S df) equals the requested SNR.
double derive_noise_psd(const ScenarioConfig& cfg, const WaveformConfig& w, double snr_db, LinkMode mode);

/// Inverse of derive_noise_psd, in dB.
double max_achievable_snr_db(const ScenarioConfig& cfg, const WaveformConfig& w, double noise_psd, LinkMode mode);

} // namespace isaccal
