#include "isaccal/channel.hpp"

#include <cmath>

#include "isaccal/precoder.hpp"

namespace isaccal {

namespace {

void add_noise(CMat& m, double variance, Rng& rng) {
  if (variance <= 0.0) return;
  std::normal_distribution<double> g(0.0, std::sqrt(variance / 2.0));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double re = g(rng);
      const double im = g(rng);
      m(r, c) += cplx{re, im};
    }
}

} // namespace

SensingObservation sensing_forward(const SensingScene& scene, const CVec& f, const CVec& x, const ArrayPair& truth,
                                   const WaveformConfig& w, double noise_psd, Rng& rng) {
  const int K = truth.rx.size();
  const int S = static_cast<int>(x.size());
  SensingObservation obs{CMat::Zero(K, S)};
  for (const auto& t : scene.targets) {
    const CVec a_rx = steering_vector(t.angle, truth.rx, w.wavelength);
    const cplx tx_gain = steering_vector(t.angle, truth.tx, w.wavelength).transpose() * f;
    const CVec d = x.cwiseProduct(freq_steering(t.delay(), S, w.subcarrier_spacing));
    obs.Y.noalias() += (t.gain(w.wavelength) * tx_gain) * a_rx * d.transpose();
  }
  add_noise(obs.Y, noise_psd * S * w.subcarrier_spacing, rng);
  return obs;
}

CommObservation comm_forward(const CommScene& scene, const CVec& f, const CVec& x, const ArrayImpairments& tx_truth,
                             const WaveformConfig& w, double noise_psd, Rng& rng) {
  const int S = static_cast<int>(x.size());
  CommObservation obs{CVec::Zero(S), CVec::Zero(S)};
  for (const auto& p : scene.paths) {
    const cplx tx_gain = steering_vector(p.angle, tx_truth, w.wavelength).transpose() * f;
    obs.csi += (p.gain * tx_gain) * freq_steering(p.delay, S, w.subcarrier_spacing);
  }
  obs.y = obs.csi.cwiseProduct(x);
  if (noise_psd > 0.0) obs.y += complex_gaussian(S, std::sqrt(noise_psd * S * w.subcarrier_spacing), rng);
  return obs;
}

} // namespace isaccal
