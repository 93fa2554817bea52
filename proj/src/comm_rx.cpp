#include "isaccal/comm_rx.hpp"

#include <cmath>

namespace isaccal {

DetectionResult ml_detect(const CommObservation& obs, Constellation c) {
  if (obs.y.size() != obs.csi.size()) fail(ErrorCode::invalid_argument, "ml_detect: y and csi lengths differ");
  const auto points = constellation_points(c);
  const Eigen::Index S = obs.y.size();
  const Eigen::Index M = static_cast<Eigen::Index>(points.size());

  DetectionResult out;
  out.symbols.resize(S);
  out.indices.resize(S);
  out.metrics.resize(S, M);
  for (Eigen::Index s = 0; s < S; ++s) {
    const cplx k = obs.csi[s];
    if (!std::isfinite(k.real()) || !std::isfinite(k.imag()))
      fail(ErrorCode::numerical, "ml_detect: non-finite channel estimate");
    if (k == cplx{0.0, 0.0}) out.zero_csi = true;
    int best = 0;
    for (Eigen::Index m = 0; m < M; ++m) {
      const double d = std::norm(obs.y[s] - k * points[m]);
      out.metrics(s, m) = d;
      if (d < out.metrics(s, best)) best = static_cast<int>(m);
    }
    out.indices[s] = best;
    out.symbols[s] = points[best];
  }
  return out;
}

} // namespace isaccal
