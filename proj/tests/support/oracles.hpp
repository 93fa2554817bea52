#pragma once

// Reference computations that the library results are compared against. They
// are written independently of the library code paths they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct Pt {
  double x = 0.0;
  double y = 0.0;
};

inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Symbol error probability of QPSK under ML detection with exact CSI at per-symbol SNR gamma.
inline double qpsk_ser(double gamma) {
  const double q = q_function(std::sqrt(gamma));
  return 2.0 * q - q * q;
}

/// GOSPA in its assignment form: pairs may be assigned only when closer than c,
/// every unassigned point on either side costs c^p / alpha. Solved exactly by
/// dynamic programming over subsets of the estimate set.
inline double gospa_assignment(const std::vector<Pt>& truth, const std::vector<Pt>& est, double c, double alpha,
                               double p) {
  const std::size_t n = truth.size(), m = est.size();
  const double miss = std::pow(c, p) / alpha;
  const std::size_t states = std::size_t{1} << m;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(states, inf), next(states);
  dp[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), inf);
    for (std::size_t s = 0; s < states; ++s) {
      if (dp[s] == inf) continue;
      next[s] = std::min(next[s], dp[s] + miss); // truth point i left unassigned
      for (std::size_t j = 0; j < m; ++j) {
        if (s & (std::size_t{1} << j)) continue;
        const double d = std::hypot(truth[i].x - est[j].x, truth[i].y - est[j].y);
        if (d >= c) continue;
        const std::size_t t = s | (std::size_t{1} << j);
        next[t] = std::min(next[t], dp[s] + std::pow(d, p));
      }
    }
    dp.swap(next);
  }
  double best = inf;
  for (std::size_t s = 0; s < states; ++s) {
    if (dp[s] == inf) continue;
    const auto used = static_cast<double>(__builtin_popcountll(s));
    best = std::min(best, dp[s] + miss * (static_cast<double>(m) - used));
  }
  return std::pow(best, 1.0 / p);
}

/// Score-function estimator on an affine toy problem: f(psi) = A psi + b
/// (complex K x n), observation f~ = f + eps with eps ~ CN(0, sigma^2 I) and
/// loss ||f~ - c||^2. E[loss] = ||f - c||^2 + K sigma^2, whose gradient over
/// psi is 2 Re(A^H (f - c)).
struct AffineToy {
  Eigen::MatrixXcd A;
  Eigen::VectorXcd b;
  Eigen::VectorXcd c;
  Eigen::VectorXd psi;

  Eigen::VectorXcd f() const { return A * psi.cast<std::complex<double>>() + b; }
  Eigen::VectorXd exact_gradient() const { return 2.0 * (A.adjoint() * (f() - c)).real(); }
};

inline AffineToy make_affine_toy(int K, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  AffineToy t;
  t.A.resize(K, n);
  t.b.resize(K);
  t.c.resize(K);
  t.psi.resize(n);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < n; ++j) t.A(i, j) = {0.3 * g(rng), 0.3 * g(rng)};
    t.b[i] = {g(rng), g(rng)};
    t.c[i] = {g(rng), g(rng)};
  }
  for (int j = 0; j < n; ++j) t.psi[j] = g(rng);
  return t;
}

} // namespace oracle
