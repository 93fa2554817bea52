#include "isaccal/sensing_rx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace isaccal {

std::shared_ptr<const AngularDictionary> AngularDictionary::build(std::vector<double> angles,
                                                                  const LearnableParams& rx, double wavelength) {
  if (angles.empty()) fail(ErrorCode::invalid_argument, "angular dictionary: empty angle grid");
  auto dict = std::make_shared<AngularDictionary>();
  dict->atoms.resize(rx.size(), static_cast<Eigen::Index>(angles.size()));
  for (std::size_t i = 0; i < angles.size(); ++i)
    dict->atoms.col(static_cast<Eigen::Index>(i)) = steering_vector(angles[i], rx, wavelength);
  dict->angles = std::move(angles);
  return dict;
}

std::vector<double> make_delay_grid(double range_min, double range_max, int n) {
  if (n < 1) fail(ErrorCode::config, "delay grid needs at least one bin");
  if (!(range_max >= range_min) || range_min < 0.0) fail(ErrorCode::config, "delay grid: invalid range interval");
  const double t0 = 2.0 * range_min / kSpeedOfLight;
  const double t1 = 2.0 * range_max / kSpeedOfLight;
  std::vector<double> grid(n);
  if (n == 1) {
    grid[0] = 0.5 * (t0 + t1);
    return grid;
  }
  for (int j = 0; j < n; ++j) grid[j] = t0 + (t1 - t0) * j / (n - 1);
  return grid;
}

Dictionaries attach_delays(std::shared_ptr<const AngularDictionary> angular, std::vector<double> delays,
                           const CVec& x, double subcarrier_spacing) {
  if (delays.empty()) fail(ErrorCode::invalid_argument, "delay dictionary: empty delay grid");
  Dictionaries d;
  d.angular = std::move(angular);
  d.subcarrier_spacing = subcarrier_spacing;
  const Eigen::Index S = x.size();
  d.delay_atoms.resize(S, static_cast<Eigen::Index>(delays.size()));
  // Phase recurrence re-anchored every few subcarriers keeps the error at a few ulp
  // without one sincos per entry.
  constexpr Eigen::Index anchor = 16;
  for (std::size_t j = 0; j < delays.size(); ++j) {
    const double w = -2.0 * kPi * subcarrier_spacing * delays[j];
    const cplx step = std::polar(1.0, w);
    auto col = d.delay_atoms.col(static_cast<Eigen::Index>(j));
    cplx z{1.0, 0.0};
    for (Eigen::Index s = 0; s < S; ++s) {
      if (s % anchor == 0) z = std::polar(1.0, w * static_cast<double>(s));
      col[s] = x[s] * z;
      z *= step;
    }
  }
  d.delays = std::move(delays);
  return d;
}

Dictionaries build_dictionaries(std::vector<double> angles, std::vector<double> delays, const LearnableParams& rx,
                                const CVec& x, double wavelength, double subcarrier_spacing) {
  return attach_delays(AngularDictionary::build(std::move(angles), rx, wavelength), std::move(delays), x,
                       subcarrier_spacing);
}

CMat adm_field(const CMat& Y, const Dictionaries& dict) {
  if (Y.rows() != dict.angle_atoms().rows() || Y.cols() != dict.delay_atoms.rows())
    fail(ErrorCode::invalid_argument, "adm: observation shape does not match dictionaries");
  const CMat YD = Y * dict.delay_atoms.conjugate();
  return dict.angle_atoms().adjoint() * YD;
}

RMat adm(const CMat& Y, const Dictionaries& dict) { return adm_field(Y, dict).cwiseAbs2(); }

namespace {

struct Atom {
  int i = 0;
  int j = 0;
};

CVec solve_gram(const CMat& G, const CVec& b) {
  Eigen::LLT<CMat> llt(G);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const double jitter = 1e-12 * G.diagonal().real().maxCoeff();
  CMat Gj = G;
  Gj.diagonal().array() += jitter;
  llt.compute(Gj);
  if (llt.info() != Eigen::Success) fail(ErrorCode::numerical, "omp: least-squares system is singular");
  return llt.solve(b);
}

// Largest entry of |Z|^2 skipping masked cells; returns value and location.
double masked_argmax(const CMat& Z, const std::vector<std::pair<int, int>>& masked, int& bi, int& bj) {
  RMat power = Z.cwiseAbs2();
  for (const auto& [i, j] : masked) power(i, j) = -1.0;
  Eigen::Index i = 0, j = 0;
  const double best = power.maxCoeff(&i, &j);
  bi = static_cast<int>(i);
  bj = static_cast<int>(j);
  return best;
}

} // namespace

OmpResult omp(const CMat& Y, const Dictionaries& dict, double delta, int max_iter) {
  if (delta < 0.0) fail(ErrorCode::invalid_argument, "omp: threshold must be >= 0");
  if (max_iter < 0) fail(ErrorCode::invalid_argument, "omp: max_iter must be >= 0");

  const CMat& Pa = dict.angle_atoms();
  const CMat& Pd = dict.delay_atoms;
  const CMat Z0 = adm_field(Y, dict);

  OmpResult out;
  out.residual = Y;
  out.residual_norms.push_back(Y.squaredNorm());
  out.gains.resize(0);

  std::vector<Atom> atoms;
  std::vector<std::pair<int, int>> masked;
  CMat Z = Z0;
  CMat GA(Pa.cols(), 0); // Phi_a^H psi_a per selected atom
  CMat GD(Pd.cols(), 0); // Phi_d^H psi_d per selected atom

  for (int it = 0; it < max_iter; ++it) {
    int bi = 0, bj = 0;
    double peak = masked_argmax(Z, masked, bi, bj);
    out.guard_values.push_back(peak);
    if (!(peak > delta)) break;

    auto duplicate = [&](int i, int j) {
      return std::any_of(atoms.begin(), atoms.end(), [&](const Atom& a) { return a.i == i && a.j == j; });
    };
    if (duplicate(bi, bj)) {
      masked.emplace_back(bi, bj);
      peak = masked_argmax(Z, masked, bi, bj);
      if (duplicate(bi, bj)) fail(ErrorCode::numerical, "omp: repeated selection of an already chosen atom");
      if (!(peak > delta)) break;
    }

    atoms.push_back({bi, bj});
    const int n = static_cast<int>(atoms.size());
    GA.conservativeResize(Eigen::NoChange, n);
    GD.conservativeResize(Eigen::NoChange, n);
    GA.col(n - 1).noalias() = Pa.adjoint() * Pa.col(bi);
    GD.col(n - 1).noalias() = Pd.adjoint() * Pd.col(bj);

    CMat G(n, n);
    CVec b(n);
    for (int t = 0; t < n; ++t) {
      b[t] = Z0(atoms[t].i, atoms[t].j);
      for (int u = 0; u < n; ++u) G(t, u) = GA(atoms[t].i, u) * GD(atoms[t].j, u);
    }
    out.gains = solve_gram(G, b);

    CMat A(Pa.rows(), n), D(Pd.rows(), n);
    for (int t = 0; t < n; ++t) {
      A.col(t) = out.gains[t] * Pa.col(atoms[t].i);
      D.col(t) = Pd.col(atoms[t].j);
    }
    out.residual = Y;
    out.residual.noalias() -= A * D.transpose();
    Z = Z0;
    Z.noalias() -= (GA * out.gains.asDiagonal()) * GD.transpose();
    out.residual_norms.push_back(out.residual.squaredNorm());
    out.detections.push_back({dict.angles()[bi], dict.delays[bj], bi, bj});
  }
  return out;
}

int detections_at(std::span<const double> guard_values, double delta) {
  int n = 0;
  while (n < static_cast<int>(guard_values.size()) && guard_values[n] > delta) ++n;
  return n;
}

Point2 position_from(double angle, double delay) {
  const double r = kSpeedOfLight * delay / 2.0;
  return {r * std::sin(angle), r * std::cos(angle)};
}

std::vector<Point2> positions_from(std::span<const Detection> detections) {
  std::vector<Point2> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back(position_from(d.angle, d.delay));
  return out;
}

std::vector<Point2> positions_from(const OmpResult& result) { return positions_from(result.detections); }

double calibrate_threshold(std::span<const std::vector<double>> noise_guard_values, double target_pfa, int t_max) {
  constexpr std::size_t min_samples = 1000;
  if (noise_guard_values.size() < min_samples)
    fail(ErrorCode::calibration, "calibrate_threshold: need at least 1000 noise-only observations, got " +
                                     std::to_string(noise_guard_values.size()));
  if (t_max < 1) fail(ErrorCode::calibration, "calibrate_threshold: t_max must be >= 1");
  if (!(target_pfa >= 0.0)) fail(ErrorCode::calibration, "calibrate_threshold: target p_fa must be >= 0");

  const double denom = static_cast<double>(noise_guard_values.size()) * t_max;
  auto pfa_at = [&](double delta) {
    double fa = 0.0;
    for (const auto& g : noise_guard_values) fa += std::min(detections_at(g, delta), t_max);
    return fa / denom;
  };

  std::vector<double> candidates{0.0};
  for (const auto& g : noise_guard_values) candidates.insert(candidates.end(), g.begin(), g.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // p_fa is non-increasing in delta: binary search for the first admissible candidate.
  std::size_t lo = 0, hi = candidates.size() - 1;
  if (pfa_at(candidates[hi]) > target_pfa) return candidates[hi];
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (pfa_at(candidates[mid]) <= target_pfa)
      hi = mid;
    else
      lo = mid + 1;
  }
  return candidates[lo];
}

} // namespace isaccal
