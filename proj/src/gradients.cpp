#include "isaccal/gradients.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace isaccal {

namespace {

std::atomic<std::uint64_t> g_privileged_calls{0};

} // namespace

RVec pack_array(const LearnableParams& p) {
  const int K = p.size();
  RVec v(3 * K);
  v.segment(0, K) = p.betas.real();
  v.segment(K, K) = p.betas.imag();
  v.segment(2 * K, K) = p.omegas;
  return v;
}

LearnableParams unpack_array(const RVec& v) {
  if (v.size() % 3 != 0) fail(ErrorCode::invalid_argument, "unpack_array: length is not a multiple of 3");
  const Eigen::Index K = v.size() / 3;
  LearnableParams p;
  p.betas.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) p.betas[k] = cplx{v[k], v[K + k]};
  p.omegas = v.segment(2 * K, K);
  return p;
}

ParamVector ParamVector::pack(const ParamsPair& p) {
  if (p.tx.size() != p.rx.size()) fail(ErrorCode::invalid_argument, "ParamVector: TX and RX sizes differ");
  ParamVector out;
  out.values.resize(6 * p.tx.size());
  out.values.head(3 * p.tx.size()) = pack_array(p.tx);
  out.values.tail(3 * p.rx.size()) = pack_array(p.rx);
  return out;
}

ParamsPair ParamVector::unpack() const {
  if (values.size() % 6 != 0) fail(ErrorCode::invalid_argument, "ParamVector: length is not a multiple of 6");
  return {unpack_array(tx()), unpack_array(rx())};
}

SteeringDerivative steering_derivative(double theta, const LearnableParams& p, double wavelength) {
  const int K = p.size();
  const double c = 2.0 * kPi * std::sin(theta) / wavelength;
  SteeringDerivative d{CVec(K), CVec(K), CVec(K)};
  for (int k = 0; k < K; ++k) {
    const cplx e = std::polar(1.0, -c * p.omegas[k]);
    d.d_re[k] = e;
    d.d_im[k] = kJ * e;
    d.d_pos[k] = -kJ * c * p.betas[k] * e;
  }
  return d;
}

RVec chain_steering(const SteeringDerivative& d, const CVec& cot) {
  const Eigen::Index K = cot.size();
  RVec g(3 * K);
  g.segment(0, K) = 2.0 * cot.cwiseProduct(d.d_re).real();
  g.segment(K, K) = 2.0 * cot.cwiseProduct(d.d_im).real();
  g.segment(2 * K, K) = 2.0 * cot.cwiseProduct(d.d_pos).real();
  return g;
}

FrozenSupport FrozenSupport::from(const OmpResult& r) {
  FrozenSupport s;
  for (const auto& d : r.detections) s.cells.emplace_back(d.angle_index, d.delay_index);
  return s;
}

ResidualRefit refit_support(const CMat& Y, const Dictionaries& dict, const FrozenSupport& support) {
  const CMat& Pa = dict.angle_atoms();
  const CMat& Pd = dict.delay_atoms;
  const int n = static_cast<int>(support.cells.size());
  ResidualRefit fit;
  fit.residual = Y;
  fit.gains = CVec::Zero(n);
  if (n > 0) {
    CMat G(n, n);
    CVec b(n);
    for (int t = 0; t < n; ++t) {
      const auto [it, jt] = support.cells[t];
      b[t] = Pa.col(it).dot(Y * Pd.col(jt).conjugate());
      for (int u = 0; u < n; ++u) {
        const auto [iu, ju] = support.cells[u];
        G(t, u) = Pa.col(it).dot(Pa.col(iu)) * Pd.col(jt).dot(Pd.col(ju));
      }
    }
    Eigen::LLT<CMat> llt(G);
    if (llt.info() != Eigen::Success) {
      G.diagonal().array() += 1e-12 * G.diagonal().real().maxCoeff();
      llt.compute(G);
      if (llt.info() != Eigen::Success) fail(ErrorCode::numerical, "refit_support: singular least-squares system");
    }
    fit.gains = llt.solve(b);
    for (int t = 0; t < n; ++t) {
      const auto [it, jt] = support.cells[t];
      fit.residual.noalias() -= (fit.gains[t] * Pa.col(it)) * Pd.col(jt).transpose();
    }
  }
  fit.loss = fit.residual.squaredNorm();
  return fit;
}

RVec grad_adm_max(const CMat& Y, const Dictionaries& dict, const LearnableParams& rx, double wavelength, int angle_index,
                  int delay_index) {
  const double theta = dict.angles()[angle_index];
  const CVec u = steering_vector(theta, rx, wavelength);
  const CVec w = Y * dict.delay_atoms.col(delay_index).conjugate();
  const cplx z = u.dot(w);
  const CVec cot = -z * w.conjugate();
  return chain_steering(steering_derivative(theta, rx, wavelength), cot);
}

RVec grad_omp_residual(const CMat& Y, const Dictionaries& dict, const LearnableParams& rx, double wavelength,
                       const FrozenSupport& support, const ResidualRefit& fit) {
  (void)Y;
  RVec g = RVec::Zero(3 * rx.size());
  const CMat Rc = fit.residual.conjugate();
  for (std::size_t t = 0; t < support.cells.size(); ++t) {
    const auto [i, j] = support.cells[t];
    const double theta = dict.angles()[i];
    const CVec cot = -fit.gains[static_cast<Eigen::Index>(t)] * (Rc * dict.delay_atoms.col(j));
    g += chain_steering(steering_derivative(theta, rx, wavelength), cot);
  }
  return g;
}

RxLossGrad grad_rx_loss(SensingLossKind kind, const CMat& Y, const Dictionaries& dict, const LearnableParams& rx,
                        double wavelength, int omp_iters) {
  RxLossGrad out;
  if (kind == SensingLossKind::adm_max) {
    const RMat map = adm(Y, dict);
    Eigen::Index bi = 0, bj = 0;
    const double peak = map.maxCoeff(&bi, &bj);
    out.loss = -peak;
    out.grad = grad_adm_max(Y, dict, rx, wavelength, static_cast<int>(bi), static_cast<int>(bj));
    return out;
  }
  const OmpResult r = omp(Y, dict, 0.0, omp_iters);
  const FrozenSupport support = FrozenSupport::from(r);
  ResidualRefit fit{r.gains, r.residual, r.residual_norms.back()};
  out.loss = fit.loss;
  out.grad = grad_omp_residual(Y, dict, rx, wavelength, support, fit);
  return out;
}

RVec grad_slcb_sensing_rx(const CMat& Y, std::span<const TargetCell> targets, const LearnableParams& rx, const CVec& x,
                          const WaveformConfig& w) {
  RVec g = RVec::Zero(3 * rx.size());
  if (targets.empty()) return g;
  const int S = static_cast<int>(x.size());
  for (const auto& t : targets) {
    const CVec u = steering_vector(t.angle, rx, w.wavelength);
    const CVec v = x.cwiseProduct(freq_steering(t.delay, S, w.subcarrier_spacing)).conjugate();
    const CVec yv = Y * v;
    const cplx z = u.dot(yv);
    g += chain_steering(steering_derivative(t.angle, rx, w.wavelength), -z * yv.conjugate());
  }
  return g / static_cast<double>(targets.size());
}

Precoder build_precoder(const PrecoderInputs& in, const LearnableParams& tx) {
  if (in.grid == nullptr) fail(ErrorCode::invalid_argument, "build_precoder: missing angle grid");
  const CVec fs = sector_precoder(in.sensing, *in.grid, tx, in.wavelength);
  const CVec fc = sector_precoder(in.comm, *in.grid, tx, in.wavelength);
  return isac_precoder(fs, fc, in.omega_r, in.power);
}

namespace {

struct SectorSum {
  CVec v;     // sum_i conj(a(theta_i))
  CVec d_re;  // per-element derivatives of v
  CVec d_im;
  CVec d_pos;
};

SectorSum sector_sum(const Sector& sector, const std::vector<double>& grid, const LearnableParams& tx,
                     double wavelength) {
  const int K = tx.size();
  SectorSum s{CVec::Zero(K), CVec::Zero(K), CVec::Zero(K), CVec::Zero(K)};
  for (int i : sector_indices(sector, grid)) {
    const SteeringDerivative d = steering_derivative(grid[i], tx, wavelength);
    s.v += steering_vector(grid[i], tx, wavelength).conjugate();
    s.d_re += d.d_re.conjugate();
    s.d_im += d.d_im.conjugate();
    s.d_pos += d.d_pos.conjugate();
  }
  return s;
}

// Derivative of v / ||v|| when only element k of v moves by dv.
CVec normalized_step(const CVec& v, double norm, Eigen::Index k, cplx dv) {
  CVec out = -v * ((std::conj(v[k]) * dv).real() / (norm * norm * norm));
  out[k] += dv / norm;
  return out;
}

} // namespace

CMat precoder_jacobian(const PrecoderInputs& in, const LearnableParams& tx) {
  if (in.grid == nullptr) fail(ErrorCode::invalid_argument, "precoder_jacobian: missing angle grid");
  const int K = tx.size();
  const SectorSum ss = sector_sum(in.sensing, *in.grid, tx, in.wavelength);
  const SectorSum sc = sector_sum(in.comm, *in.grid, tx, in.wavelength);
  const double ns = ss.v.norm();
  const double nc = sc.v.norm();
  if (!(ns > 0.0) || !(nc > 0.0)) fail(ErrorCode::numerical, "precoder_jacobian: zero steering sum");
  const double a = std::sqrt(in.omega_r);
  const double b = std::sqrt(1.0 - in.omega_r);
  const CVec u = a * ss.v / ns + b * sc.v / nc;
  const double nu = u.norm();
  if (nu < 1e-9) fail(ErrorCode::numerical, "precoder_jacobian: degenerate combination of sector precoders");
  const double sp = std::sqrt(in.power);

  CMat J(K, 3 * K);
  for (int k = 0; k < K; ++k) {
    const cplx dvs[3] = {ss.d_re[k], ss.d_im[k], ss.d_pos[k]};
    const cplx dvc[3] = {sc.d_re[k], sc.d_im[k], sc.d_pos[k]};
    for (int p = 0; p < 3; ++p) {
      const CVec du = a * normalized_step(ss.v, ns, k, dvs[p]) + b * normalized_step(sc.v, nc, k, dvc[p]);
      const double re = u.dot(du).real();
      J.col(p * K + k) = sp * (du / nu - u * (re / (nu * nu * nu)));
    }
  }
  return J;
}

RVec chain_precoder(const CVec& g, const CMat& jacobian) { return 2.0 * (jacobian.adjoint() * g).real(); }

RVec score_function_grad(double loss, const PerturbedPrecoder& pp, const CMat& jacobian) {
  return loss * log_pdf_grad(pp, jacobian);
}

PrivilegedChannel::PrivilegedChannel(ArrayPair truth, WaveformConfig waveform)
    : truth_(std::move(truth)), waveform_(waveform) {}

std::uint64_t PrivilegedChannel::call_count() { return g_privileged_calls.load(); }

CVec PrivilegedChannel::sensing_cotangent(const SensingScene& scene, const CMat& Y,
                                          std::span<const TargetCell> targets, const LearnableParams& rx,
                                          const CVec& x) const {
  ++g_privileged_calls;
  const int K = truth_.tx.size();
  CVec g = CVec::Zero(K);
  if (targets.empty()) return g;
  const int S = static_cast<int>(x.size());
  const double lambda = waveform_.wavelength;
  const double df = waveform_.subcarrier_spacing;

  struct Path {
    cplx alpha;
    CVec a_rx, a_tx, d;
  };
  std::vector<Path> paths;
  for (const auto& t : scene.targets)
    paths.push_back({t.gain(lambda), steering_vector(t.angle, truth_.rx, lambda),
                     steering_vector(t.angle, truth_.tx, lambda), x.cwiseProduct(freq_steering(t.delay(), S, df))});

  for (const auto& t : targets) {
    const CVec u = steering_vector(t.angle, rx, lambda);
    const CVec v = x.cwiseProduct(freq_steering(t.delay, S, df)).conjugate();
    const cplx z = u.dot(Y * v);
    CVec h = CVec::Zero(K);
    for (const auto& p : paths) h += (p.alpha * u.dot(p.a_rx) * p.d.cwiseProduct(v).sum()) * p.a_tx;
    g -= z * h.conjugate();
  }
  return g / static_cast<double>(targets.size());
}

CVec PrivilegedChannel::comm_cotangent(const CommScene& scene, const CommObservation& obs,
                                       const SymbolBlock& symbols) const {
  ++g_privileged_calls;
  const int K = truth_.tx.size();
  const Eigen::Index S = obs.y.size();
  const double lambda = waveform_.wavelength;

  // kappa_s = C.row(s) f
  CMat C = CMat::Zero(S, K);
  for (const auto& p : scene.paths)
    C.noalias() += (p.gain * freq_steering(p.delay, static_cast<int>(S), waveform_.subcarrier_spacing)) *
                   steering_vector(p.angle, truth_.tx, lambda).transpose();

  const auto points = constellation_points(symbols.constellation);
  const std::size_t M = points.size();
  std::vector<double> d(M), logits(M);
  std::vector<cplx> e(M);
  CVec g = CVec::Zero(K);
  for (Eigen::Index s = 0; s < S; ++s) {
    const int truth_idx = symbols.indices[s];
    const cplx xs = points[truth_idx];
    for (std::size_t m = 0; m < M; ++m) {
      e[m] = obs.y[s] - obs.csi[s] * points[m];
      d[m] = std::max(std::norm(e[m]), kCceDistanceFloor);
      logits[m] = -std::log(d[m]);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    cplx coeff{0.0, 0.0};
    for (std::size_t m = 0; m < M; ++m) {
      if (std::norm(e[m]) < kCceDistanceFloor) continue;
      const double p = std::exp(logits[m] - mx) / sum;
      const double dcce = (static_cast<int>(m) == truth_idx ? 1.0 : 0.0) / d[m] - p / d[m];
      coeff += dcce * e[m] * std::conj(xs - points[m]);
    }
    g += coeff * C.row(s).adjoint();
  }
  return g / static_cast<double>(S);
}

double fd_check(const std::function<double(const RVec&)>& f, const RVec& x, const RVec& grad, int directions, Rng& rng,
                double step_scale, double abs_floor) {
  std::normal_distribution<double> gauss;
  const double h = step_scale * (1.0 + x.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (int n = 0; n < directions; ++n) {
    RVec d(x.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = gauss(rng);
    d.normalize();
    const double fd = (f(x + h * d) - f(x - h * d)) / (2.0 * h);
    const double an = grad.dot(d);
    const double scale = std::max({std::abs(fd), std::abs(an), abs_floor});
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(fd - an) / scale);
  }
  return worst;
}

} // namespace isaccal
