#include "isaccal/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace isaccal {

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::config, std::string("invalid scenario configuration: ") + what);
  };
  require(t_max >= 0, "scenario.t_max must be >= 0");
  require(t_tilde_max >= 1, "scenario.t_tilde_max must be >= 1");
  require(rcs_mean > 0.0, "scenario.rcs_mean_m2 must be > 0");
  require(std::isfinite(snr_s_db) && std::isfinite(snr_c_db), "SNR values must be finite");
  require(range_min > 0.0 && range_max > range_min, "scenario.range_min_m < range_max_m required");
  require(ue_range_min > 0.0 && ue_range_max > ue_range_min, "scenario.ue_range_min_m < ue_range_max_m required");
  require(cp_fraction > 0.0, "scenario.cp_fraction must be > 0");
  require(sector_width_min > 0.0 && sector_width_max >= sector_width_min, "sector width range invalid");
}

double radar_gain_sq(double rcs, double range, double wavelength) {
  const double four_pi = 4.0 * kPi;
  return rcs * wavelength * wavelength / (four_pi * four_pi * four_pi * std::pow(range, 4));
}

cplx Target::gain(double wavelength) const {
  return std::polar(std::sqrt(radar_gain_sq(rcs, range, wavelength)), gain_phase);
}

Constellation parse_constellation(const std::string& name) {
  if (name == "bpsk") return Constellation::bpsk;
  if (name == "qpsk") return Constellation::qpsk;
  if (name == "qam16" || name == "16qam") return Constellation::qam16;
  fail(ErrorCode::config, "unknown constellation '" + name + "' (expected bpsk, qpsk or qam16)");
}

std::string to_string(Constellation c) {
  switch (c) {
    case Constellation::bpsk: return "bpsk";
    case Constellation::qpsk: return "qpsk";
    case Constellation::qam16: return "qam16";
  }
  return "qpsk";
}

std::span<const cplx> constellation_points(Constellation c) {
  static const std::array<cplx, 2> bpsk{cplx{-1.0, 0.0}, cplx{1.0, 0.0}};
  static const std::array<cplx, 4> qpsk = [] {
    const double a = 1.0 / std::sqrt(2.0);
    return std::array<cplx, 4>{cplx{a, a}, cplx{-a, a}, cplx{-a, -a}, cplx{a, -a}};
  }();
  static const std::array<cplx, 16> qam16 = [] {
    std::array<cplx, 16> pts{};
    const double levels[4] = {-3.0, -1.0, 1.0, 3.0};
    const double norm = 1.0 / std::sqrt(10.0);
    int n = 0;
    for (double re : levels)
      for (double im : levels) pts[n++] = cplx{re * norm, im * norm};
    return pts;
  }();
  switch (c) {
    case Constellation::bpsk: return bpsk;
    case Constellation::qpsk: return qpsk;
    case Constellation::qam16: return qam16;
  }
  return qpsk;
}

namespace {

Sector draw_sector(const ScenarioConfig& cfg, double fov, Rng& rng) {
  std::uniform_real_distribution<double> center(-cfg.sector_center_max, cfg.sector_center_max);
  std::uniform_real_distribution<double> width(cfg.sector_width_min, cfg.sector_width_max);
  const double c = center(rng);
  const double w = width(rng);
  return {std::clamp(c - w / 2.0, -fov, fov), std::clamp(c + w / 2.0, -fov, fov)};
}

std::pair<double, double> draw_interval(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  double a = u(rng);
  double b = u(rng);
  if (a > b) std::swap(a, b);
  return {a, b};
}

} // namespace

std::pair<Sector, Sector> draw_sectors(const ScenarioConfig& cfg, double field_of_view, Rng& rng) {
  Sector sensing = draw_sector(cfg, field_of_view, rng);
  Sector comm = draw_sector(cfg, field_of_view, rng);
  return {sensing, comm};
}

SensingScene draw_sensing_scene(const ScenarioConfig& cfg, const Sector& sector, Rng& rng) {
  SensingScene scene;
  scene.sector = sector;
  std::tie(scene.range_min, scene.range_max) = draw_interval(cfg.range_min, cfg.range_max, rng);

  std::uniform_int_distribution<int> count(0, cfg.t_max);
  std::uniform_real_distribution<double> angle(sector.min, sector.max);
  std::uniform_real_distribution<double> range(scene.range_min, scene.range_max);
  std::exponential_distribution<double> rcs(1.0 / cfg.rcs_mean);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  const int n = count(rng);
  scene.targets.reserve(n);
  for (int t = 0; t < n; ++t) {
    Target tgt;
    tgt.angle = angle(rng);
    tgt.range = range(rng);
    tgt.rcs = rcs(rng);
    tgt.gain_phase = phase(rng);
    scene.targets.push_back(tgt);
  }
  return scene;
}

CommScene draw_comm_scene(const ScenarioConfig& cfg, const WaveformConfig& w, const Sector& sector, Rng& rng) {
  CommScene scene;
  scene.sector = sector;
  const double lambda = w.wavelength;
  const double t_cp = cfg.cyclic_prefix(w);

  auto [ue_min, ue_max] = draw_interval(cfg.ue_range_min, cfg.ue_range_max, rng);
  std::uniform_real_distribution<double> ue_range(ue_min, ue_max);
  std::uniform_real_distribution<double> angle(sector.min, sector.max);
  std::uniform_int_distribution<int> count(1, cfg.t_tilde_max);
  std::exponential_distribution<double> rcs(1.0 / cfg.rcs_mean);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  scene.ue_range = ue_range(rng);
  const double ue_angle = angle(rng);
  const int n = count(rng);

  const double four_pi = 4.0 * kPi;
  CommPath los;
  los.angle = ue_angle;
  los.delay = scene.ue_range / kSpeedOfLight;
  los.gain = std::polar(lambda / (four_pi * scene.ue_range), phase(rng));
  scene.paths.push_back(los);

  const double ue_x = scene.ue_range * std::sin(ue_angle);
  const double ue_y = scene.ue_range * std::cos(ue_angle);
  const double near = std::min(cfg.ue_range_min, scene.ue_range);

  int attempts = 0;
  for (int t = 1; t < n; ++t) {
    for (;;) {
      if (++attempts > 1000) fail(ErrorCode::scene_generation, "draw_comm_scene: delay-spread rejection exhausted");
      std::uniform_real_distribution<double> dist(near, scene.ue_range);
      const double r1 = dist(rng);
      const double th = angle(rng);
      const double sx = r1 * std::sin(th);
      const double sy = r1 * std::cos(th);
      const double r2 = std::hypot(ue_x - sx, ue_y - sy);
      const double delay = (r1 + r2) / kSpeedOfLight;
      const double sigma = rcs(rng);
      const double ph = phase(rng);
      if (r2 < cfg.scatterer_min_distance) continue;
      if (delay - los.delay > t_cp) continue;
      CommPath p;
      p.angle = th;
      p.delay = delay;
      p.gain = std::polar(lambda * std::sqrt(sigma) / (std::pow(four_pi, 1.5) * r1 * r2), ph);
      scene.paths.push_back(p);
      break;
    }
  }
  return scene;
}

SymbolBlock draw_symbols(int num_subcarriers, Constellation c, Rng& rng) {
  const auto pts = constellation_points(c);
  if (pts.empty()) fail(ErrorCode::invalid_argument, "draw_symbols: empty constellation");
  std::uniform_int_distribution<int> pick(0, static_cast<int>(pts.size()) - 1);
  SymbolBlock block;
  block.constellation = c;
  block.symbols.resize(num_subcarriers);
  block.indices.resize(num_subcarriers);
  for (int s = 0; s < num_subcarriers; ++s) {
    const int i = pick(rng);
    block.indices[s] = i;
    block.symbols[s] = pts[i];
  }
  return block;
}

double mean_inverse_fourth_power(double a, double b) {
  return (std::pow(a, -3) - std::pow(b, -3)) / (3.0 * (b - a));
}

double expected_gain_sq(const ScenarioConfig& cfg, const WaveformConfig& w, LinkMode mode) {
  const double lambda2 = w.wavelength * w.wavelength;
  const double four_pi = 4.0 * kPi;
  if (mode == LinkMode::sensing) {
    return cfg.rcs_mean * lambda2 / (four_pi * four_pi * four_pi) *
           mean_inverse_fourth_power(cfg.range_min, cfg.range_max);
  }
  // Line-of-sight branch only; E[1/R^2] over U[a, b] is 1/(a b).
  return lambda2 / (four_pi * four_pi) / (cfg.ue_range_min * cfg.ue_range_max);
}

double derive_noise_psd(const ScenarioConfig& cfg, const WaveformConfig& w, double snr_db, LinkMode mode) {
  if (!std::isfinite(snr_db)) fail(ErrorCode::invalid_argument, "derive_noise_psd: SNR must be finite");
  const double snr = std::pow(10.0, snr_db / 10.0);
  return w.tx_power * w.num_antennas * expected_gain_sq(cfg, w, mode) /
         (snr * w.num_subcarriers * w.subcarrier_spacing);
}

double max_achievable_snr_db(const ScenarioConfig& cfg, const WaveformConfig& w, double noise_psd, LinkMode mode) {
  const double snr = w.tx_power * w.num_antennas * expected_gain_sq(cfg, w, mode) /
                     (noise_psd * w.num_subcarriers * w.subcarrier_spacing);
  return 10.0 * std::log10(snr);
}

} // namespace isaccal
