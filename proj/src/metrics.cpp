#include "isaccal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace isaccal {

double pmd(std::span<const CountPair> batch) {
  double hit = 0.0, total = 0.0;
  for (const auto& c : batch) {
    hit += std::min(c.truth, c.estimated);
    total += c.truth;
  }
  if (total <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 1.0 - hit / total;
}

double pfa(std::span<const CountPair> batch, int t_max) {
  double fa = 0.0, total = 0.0;
  for (const auto& c : batch) {
    fa += std::max(c.truth, c.estimated) - c.truth;
    total += t_max - c.truth;
  }
  if (total <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return fa / total;
}

void GospaConfig::validate() const {
  if (!(cutoff > 0.0)) fail(ErrorCode::config, "gospa: cutoff must be > 0");
  if (!(mu > 0.0 && mu <= 2.0)) fail(ErrorCode::config, "gospa: mu must be in (0, 2]");
  if (!(order >= 1.0)) fail(ErrorCode::config, "gospa: order must be >= 1");
}

double gospa(std::span<const Point2> truth, std::span<const Point2> estimates, const GospaConfig& cfg) {
  std::span<const Point2> small = truth, large = estimates;
  if (small.size() > large.size()) std::swap(small, large);
  const double cp = std::pow(cfg.cutoff, cfg.order);

  double best = 0.0;
  if (!small.empty()) {
    std::vector<int> perm(large.size());
    std::iota(perm.begin(), perm.end(), 0);
    best = std::numeric_limits<double>::infinity();
    do {
      double acc = 0.0;
      for (std::size_t i = 0; i < small.size(); ++i) {
        const Point2& a = small[i];
        const Point2& b = large[perm[i]];
        const double d = std::min(std::hypot(a.x - b.x, a.y - b.y), cfg.cutoff);
        acc += std::pow(d, cfg.order);
      }
      best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  const double total = best + cp / cfg.mu * static_cast<double>(large.size() - small.size());
  return std::pow(total, 1.0 / cfg.order);
}

double ser(std::span<const int> sent, std::span<const int> detected) {
  if (sent.size() != detected.size()) fail(ErrorCode::invalid_argument, "ser: length mismatch");
  if (sent.empty()) return 0.0;
  std::size_t errors = 0;
  for (std::size_t s = 0; s < sent.size(); ++s) errors += sent[s] != detected[s];
  return static_cast<double>(errors) / static_cast<double>(sent.size());
}

RVec precoder_response(const CVec& gains, const RVec& positions, const CVec& f, std::span<const double> angles,
                       double wavelength) {
  RVec out(static_cast<Eigen::Index>(angles.size()));
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const cplx r = steering_vector(angles[i], gains, positions, wavelength).transpose() * f;
    out[static_cast<Eigen::Index>(i)] = 10.0 * std::log10(std::norm(r));
  }
  return out;
}

std::string MetricsReport::csv_header() { return "p_md,p_fa,gospa,ser,samples,targets,detections"; }

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << p_md << ',' << p_fa << ',' << gospa_mean << ',' << ser << ',' << samples << ',' << targets << ','
     << detections;
  return os.str();
}

} // namespace isaccal
