#include "isaccal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace isaccal {

SensingLossKind parse_sensing_loss(const std::string& name) {
  if (name == "adm_max") return SensingLossKind::adm_max;
  if (name == "omp_residual") return SensingLossKind::omp_residual;
  fail(ErrorCode::config, "unknown sensing loss '" + name + "' (expected adm_max or omp_residual)");
}

std::string to_string(SensingLossKind k) { return k == SensingLossKind::adm_max ? "adm_max" : "omp_residual"; }

double loss_adm_max(const CMat& Y, const Dictionaries& dict) { return -adm(Y, dict).maxCoeff(); }

double loss_omp_residual(const CMat& Y, const Dictionaries& dict, int iters) {
  if (iters < 0) fail(ErrorCode::invalid_argument, "loss_omp_residual: iters must be >= 0");
  return omp(Y, dict, 0.0, iters).residual_norms.back();
}

double loss_comm_energy(const CommObservation& obs) { return -obs.y.squaredNorm(); }

LossValue isac_batch_loss(std::span<const SampleLoss> samples) {
  if (samples.empty()) fail(ErrorCode::invalid_argument, "isac_batch_loss: empty batch");
  LossValue v;
  for (const auto& s : samples) {
    v.value += s.weighted();
    v.sensing += s.sensing;
    v.comm += s.comm;
    v.eta += s.eta;
  }
  const double n = static_cast<double>(samples.size());
  v.value /= n;
  v.sensing /= n;
  v.comm /= n;
  v.eta /= n;
  return v;
}

std::vector<TargetCell> target_cells(const SensingScene& scene) {
  std::vector<TargetCell> out;
  out.reserve(scene.targets.size());
  for (const auto& t : scene.targets) out.push_back({t.angle, t.delay()});
  return out;
}

double slcb_sensing_loss(const CMat& Y, std::span<const TargetCell> targets, const LearnableParams& rx, const CVec& x,
                         const WaveformConfig& w) {
  if (targets.empty()) return 0.0;
  const int S = static_cast<int>(x.size());
  double acc = 0.0;
  for (const auto& t : targets) {
    const CVec u = steering_vector(t.angle, rx, w.wavelength);
    const CVec v = x.cwiseProduct(freq_steering(t.delay, S, w.subcarrier_spacing)).conjugate();
    const cplx z = u.dot(Y * v);
    acc += std::norm(z);
  }
  return -acc / static_cast<double>(targets.size());
}

double slcb_comm_loss(const CommObservation& obs, const std::vector<int>& true_indices, Constellation c) {
  const auto points = constellation_points(c);
  const Eigen::Index S = obs.y.size();
  if (static_cast<Eigen::Index>(true_indices.size()) != S)
    fail(ErrorCode::invalid_argument, "slcb_comm_loss: symbol count does not match observation");
  std::vector<double> logits(points.size());
  double acc = 0.0;
  for (Eigen::Index s = 0; s < S; ++s) {
    for (std::size_t m = 0; m < points.size(); ++m)
      logits[m] = -std::log(std::max(std::norm(obs.y[s] - obs.csi[s] * points[m]), kCceDistanceFloor));
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    acc += mx + std::log(sum) - logits[true_indices[s]];
  }
  return acc / static_cast<double>(S);
}

} // namespace isaccal
