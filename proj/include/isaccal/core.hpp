#pragma once

// Complex array arithmetic, steering vectors and the array impairment models
// shared by every other part of the library.

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace isaccal {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr cplx kJ{0.0, 1.0};

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Numeric values double as process exit codes for the CLI.
enum class ErrorCode : int {
  io = 1,
  config = 2,
  numerical = 3,
  invalid_argument = 4,
  scene_generation = 5,
  calibration = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

using Rng = std::mt19937_64;

/// Derives an independent generator from a master seed and a stream path,
/// e.g. make_rng(seed, {iteration, sample, role}). Streams never alias as
/// long as the paths differ.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

/// Waveform and array parameters of the base station.
struct WaveformConfig {
  int num_subcarriers = 64;          // S
  double subcarrier_spacing = 240e3; // Hz
  double wavelength = 5e-3;          // m
  double tx_power = 0.1;             // W
  int num_antennas = 16;             // K
  double field_of_view = kPi / 2.0;  // rad, half-width
  double noise_psd = 1.0;            // W/Hz

  void validate() const;
  /// Per-entry noise variance N0 * S * df of the observations.
  double noise_variance() const { return noise_psd * num_subcarriers * subcarrier_spacing; }
};

/// Ground-truth gain-phase and position impairments of one array.
struct ArrayImpairments {
  CVec gains;     // |gain| <= 1
  RVec positions; // m, strictly increasing

  int size() const { return static_cast<int>(gains.size()); }
  bool feasible() const;
  static ArrayImpairments ideal(int num_antennas, double wavelength);
};

/// Learnable steering parameters of one array (betas, omegas).
struct LearnableParams {
  CVec betas;
  RVec omegas;

  int size() const { return static_cast<int>(betas.size()); }
  bool feasible() const;
  static LearnableParams ideal(int num_antennas, double wavelength);
  static LearnableParams from(const ArrayImpairments& truth);
};

/// Transmit and receive arrays of the base station.
struct ArrayPair {
  ArrayImpairments tx;
  ArrayImpairments rx;
};

struct ParamsPair {
  LearnableParams tx;
  LearnableParams rx;

  static ParamsPair ideal(int num_antennas, double wavelength) {
    return {LearnableParams::ideal(num_antennas, wavelength), LearnableParams::ideal(num_antennas, wavelength)};
  }
  static ParamsPair from(const ArrayPair& truth) {
    return {LearnableParams::from(truth.tx), LearnableParams::from(truth.rx)};
  }
};

/// Half-wavelength ULA centered around zero: (k - (K-1)/2) * lambda / 2.
RVec ideal_positions(int num_antennas, double wavelength);

/// Element k is gain_k * exp(-j 2 pi pos_k sin(theta) / lambda).
CVec steering_vector(double theta, const CVec& gains, const RVec& positions, double wavelength);

inline CVec steering_vector(double theta, const LearnableParams& p, double wavelength) {
  return steering_vector(theta, p.betas, p.omegas, wavelength);
}
inline CVec steering_vector(double theta, const ArrayImpairments& p, double wavelength) {
  return steering_vector(theta, p.gains, p.positions, wavelength);
}

/// Element s is exp(-j 2 pi s df tau), s = 0..S-1.
CVec freq_steering(double delay, int num_subcarriers, double subcarrier_spacing);

struct ImpairmentModel {
  double position_jitter_fraction = 0.2; // epsilon_p ~ U[-f lambda, f lambda]
  double gain_mag_min = 0.95;
  double gain_mag_max = 1.0;
  double gain_phase_max = kPi / 2.0;     // phase ~ U[-max, max]
};

ArrayImpairments draw_impairments(int num_antennas, double wavelength, Rng& rng, const ImpairmentModel& model = {});

/// Draws both arrays from one seed (independent streams for TX and RX).
ArrayPair draw_array_pair(int num_antennas, double wavelength, std::uint64_t impairment_seed,
                          const ImpairmentModel& model = {});

} // namespace isaccal
