#pragma once

// Analytic gradients over the real parameter vector, the precoder Jacobian for
// the score-function estimator, and the privileged differentiable channel that
// only the supervised baseline may use.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "isaccal/channel.hpp"
#include "isaccal/losses.hpp"
#include "isaccal/precoder.hpp"
#include "isaccal/scenario.hpp"
#include "isaccal/sensing_rx.hpp"

namespace isaccal {

/// Flat real vector [Re b_tx, Im b_tx, w_tx, Re b_rx, Im b_rx, w_rx], length 6K.
struct ParamVector {
  RVec values;

  int num_antennas() const { return static_cast<int>(values.size() / 6); }

  static ParamVector pack(const ParamsPair& p);
  ParamsPair unpack() const;

  // Segment views for one array: [Re b, Im b, w], length 3K.
  auto tx() { return values.head(values.size() / 2); }
  auto rx() { return values.tail(values.size() / 2); }
  auto tx() const { return values.head(values.size() / 2); }
  auto rx() const { return values.tail(values.size() / 2); }
};

RVec pack_array(const LearnableParams& p);
LearnableParams unpack_array(const RVec& v);

enum class GradKind { direct, score_function, privileged };

struct GradSample {
  RVec gradient; // 6K
  double loss = 0.0;
  std::uint64_t sample_id = 0;
  GradKind kind = GradKind::direct;
};

/// Derivatives of a_k = b_k exp(-j c sin(theta) w_k) for one angle, as three
/// K-vectors: d/dRe b, d/dIm b, d/dw (each entry depends on its own element only).
struct SteeringDerivative {
  CVec d_re;
  CVec d_im;
  CVec d_pos;
};
SteeringDerivative steering_derivative(double theta, const LearnableParams& p, double wavelength);

/// Gradient (3K) of a real loss whose Wirtinger derivative with respect to the
/// steering vector a(theta) is cot, i.e. dl = 2 Re sum_k cot_k da_k.
RVec chain_steering(const SteeringDerivative& d, const CVec& cot);

/// Selected atoms of a forward OMP pass, pinned during differentiation.
struct FrozenSupport {
  std::vector<std::pair<int, int>> cells; // (angle index, delay index)

  static FrozenSupport from(const OmpResult& r);
};

struct ResidualRefit {
  CVec gains;
  CMat residual;
  double loss = 0.0;
};

/// Least-squares fit of Y on the pinned atoms and its residual energy.
ResidualRefit refit_support(const CMat& Y, const Dictionaries& dict, const FrozenSupport& support);

/// Gradient over Psi_rx (3K) of the ADM-max loss at the given (pinned) cell.
RVec grad_adm_max(const CMat& Y, const Dictionaries& dict, const LearnableParams& rx, double wavelength, int angle_index,
                  int delay_index);

/// Gradient over Psi_rx (3K) of the OMP residual loss with the support pinned.
RVec grad_omp_residual(const CMat& Y, const Dictionaries& dict, const LearnableParams& rx, double wavelength,
                       const FrozenSupport& support, const ResidualRefit& fit);

struct RxLossGrad {
  double loss = 0.0;
  RVec grad; // 3K over Psi_rx
};

/// Forward loss plus its gradient over Psi_rx, with the argmax/support frozen at the forward pass.
RxLossGrad grad_rx_loss(SensingLossKind kind, const CMat& Y, const Dictionaries& dict, const LearnableParams& rx,
                        double wavelength, int omp_iters);

/// Gradient over Psi_rx (3K) of the supervised sensing loss.
RVec grad_slcb_sensing_rx(const CMat& Y, std::span<const TargetCell> targets, const LearnableParams& rx, const CVec& x,
                          const WaveformConfig& w);

/// Inputs that define the transmitted precoder.
struct PrecoderInputs {
  Sector sensing;
  Sector comm;
  const std::vector<double>* grid = nullptr;
  double omega_r = 0.5;
  double power = 0.1;
  double wavelength = 5e-3;
};

Precoder build_precoder(const PrecoderInputs& in, const LearnableParams& tx);

/// Complex K x 3K Jacobian of f over [Re b_tx, Im b_tx, w_tx].
CMat precoder_jacobian(const PrecoderInputs& in, const LearnableParams& tx);

/// Real gradient over the parameters when dl/d conj(f) = g: 2 Re(g^H J).
RVec chain_precoder(const CVec& g, const CMat& jacobian);

/// loss * grad log p(f~), the score-function estimate of the gradient over Psi_tx.
RVec score_function_grad(double loss, const PerturbedPrecoder& pp, const CMat& jacobian);

/// Differentiable re-implementation of the channels with access to the ground
/// truth. Every call is counted so tests can prove the unsupervised path never
/// touches it.
class PrivilegedChannel {
 public:
  PrivilegedChannel(ArrayPair truth, WaveformConfig waveform);

  /// dl/d conj(f) of the supervised sensing loss, for the observation Y produced with weights f.
  CVec sensing_cotangent(const SensingScene& scene, const CMat& Y, std::span<const TargetCell> targets,
                         const LearnableParams& rx, const CVec& x) const;

  /// dl/d conj(f) of the supervised CCE loss for a communication observation produced with f.
  CVec comm_cotangent(const CommScene& scene, const CommObservation& obs, const SymbolBlock& symbols) const;

  const ArrayPair& truth() const { return truth_; }

  static std::uint64_t call_count();

 private:
  ArrayPair truth_;
  WaveformConfig waveform_;
};

/// Central-difference check of an analytic gradient: for `directions` random
/// unit directions d, compares (f(x + h d) - f(x - h d)) / 2h with g.d, where
/// h = 1e-6 (1 + |x|_inf). Returns the worst relative error; derivatives below
/// abs_floor are compared in absolute terms.
double fd_check(const std::function<double(const RVec&)>& f, const RVec& x, const RVec& grad, int directions, Rng& rng,
                double step_scale = 1e-6, double abs_floor = 0.0);

} // namespace isaccal
