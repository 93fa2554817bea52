#include "isaccal/core.hpp"

#include <cmath>
#include <sstream>

namespace isaccal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::uint64_t h = splitmix64(seed);
  for (auto s : stream) h = splitmix64(h ^ splitmix64(s + 0x632BE59BD9B4E019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(splitmix64(h)), static_cast<std::uint32_t>(splitmix64(h) >> 32)};
  return Rng(seq);
}

void WaveformConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::config, std::string("invalid waveform configuration: ") + what);
  };
  require(num_subcarriers >= 1, "waveform.S must be >= 1");
  require(num_antennas >= 2, "waveform.K must be >= 2");
  require(subcarrier_spacing > 0.0, "waveform.delta_f_hz must be > 0");
  require(wavelength > 0.0, "waveform.lambda_m must be > 0");
  require(tx_power > 0.0, "waveform.power_w must be > 0");
  require(field_of_view > 0.0 && field_of_view <= kPi / 2.0, "waveform.fov_deg must be in (0, 90]");
  require(noise_psd > 0.0 && std::isfinite(noise_psd), "noise psd must be finite and > 0");
}

namespace {

template <typename Gains>
bool feasible_impl(const Gains& g, const RVec& p) {
  if (g.size() != p.size() || g.size() < 1) return false;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    if (!(std::abs(g[k]) <= 1.0 + 1e-15)) return false;
    if (!std::isfinite(p[k])) return false;
    if (k > 0 && !(p[k] > p[k - 1])) return false;
  }
  return true;
}

} // namespace

bool ArrayImpairments::feasible() const { return feasible_impl(gains, positions); }
bool LearnableParams::feasible() const { return feasible_impl(betas, omegas); }

ArrayImpairments ArrayImpairments::ideal(int num_antennas, double wavelength) {
  return {CVec::Ones(num_antennas), ideal_positions(num_antennas, wavelength)};
}

LearnableParams LearnableParams::ideal(int num_antennas, double wavelength) {
  return {CVec::Ones(num_antennas), ideal_positions(num_antennas, wavelength)};
}

LearnableParams LearnableParams::from(const ArrayImpairments& truth) { return {truth.gains, truth.positions}; }

RVec ideal_positions(int num_antennas, double wavelength) {
  if (num_antennas < 2) fail(ErrorCode::config, "ideal_positions: need at least 2 antennas");
  RVec p(num_antennas);
  const double mid = 0.5 * (num_antennas - 1);
  for (int k = 0; k < num_antennas; ++k) p[k] = (k - mid) * wavelength / 2.0;
  return p;
}

CVec steering_vector(double theta, const CVec& gains, const RVec& positions, double wavelength) {
  const double s = std::sin(theta);
  const double c = -2.0 * kPi * s / wavelength;
  CVec a(gains.size());
  for (Eigen::Index k = 0; k < gains.size(); ++k) a[k] = gains[k] * std::polar(1.0, c * positions[k]);
  return a;
}

CVec freq_steering(double delay, int num_subcarriers, double subcarrier_spacing) {
  CVec r(num_subcarriers);
  const double w = -2.0 * kPi * subcarrier_spacing * delay;
  for (int s = 0; s < num_subcarriers; ++s) r[s] = std::polar(1.0, w * s);
  return r;
}

ArrayImpairments draw_impairments(int num_antennas, double wavelength, Rng& rng, const ImpairmentModel& model) {
  std::uniform_real_distribution<double> mag(model.gain_mag_min, model.gain_mag_max);
  std::uniform_real_distribution<double> phase(-model.gain_phase_max, model.gain_phase_max);
  const double jitter = model.position_jitter_fraction * wavelength;
  std::uniform_real_distribution<double> offset(-jitter, jitter);

  ArrayImpairments out;
  out.gains.resize(num_antennas);
  for (int k = 0; k < num_antennas; ++k) out.gains[k] = std::polar(mag(rng), phase(rng));

  const RVec ideal = ideal_positions(num_antennas, wavelength);
  out.positions.resize(num_antennas);
  for (int k = 0; k < num_antennas; ++k) {
    int attempts = 0;
    do {
      if (++attempts > 10000) fail(ErrorCode::scene_generation, "draw_impairments: cannot keep positions ordered");
      out.positions[k] = ideal[k] + offset(rng);
    } while (k > 0 && out.positions[k] <= out.positions[k - 1]);
  }
  return out;
}

ArrayPair draw_array_pair(int num_antennas, double wavelength, std::uint64_t impairment_seed,
                          const ImpairmentModel& model) {
  Rng tx_rng = make_rng(impairment_seed, {0x7478});
  Rng rx_rng = make_rng(impairment_seed, {0x7278});
  ArrayPair pair;
  pair.tx = draw_impairments(num_antennas, wavelength, tx_rng, model);
  pair.rx = draw_impairments(num_antennas, wavelength, rx_rng, model);
  return pair;
}

} // namespace isaccal
