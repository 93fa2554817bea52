#include "isaccal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "isaccal/channel.hpp"
#include "isaccal/precoder.hpp"

namespace isaccal {

EtaMode parse_eta_mode(const std::string& s) {
  if (s == "fixed") return EtaMode::fixed;
  if (s == "tied") return EtaMode::tied;
  fail(ErrorCode::config, "unknown eta mode '" + s + "' (expected fixed or tied)");
}

std::string to_string(EtaMode m) { return m == EtaMode::fixed ? "fixed" : "tied"; }

TrainMode parse_train_mode(const std::string& s) {
  if (s == "unsupervised" || s == "ul") return TrainMode::unsupervised;
  if (s == "slcb") return TrainMode::slcb;
  if (s == "slcb_perturbed" || s == "slcb-perturbed") return TrainMode::slcb_perturbed;
  if (s == "none") return TrainMode::none;
  fail(ErrorCode::config, "unknown training mode '" + s + "' (expected unsupervised, slcb, slcb_perturbed or none)");
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::unsupervised: return "unsupervised";
    case TrainMode::slcb: return "slcb";
    case TrainMode::slcb_perturbed: return "slcb_perturbed";
    case TrainMode::none: return "none";
  }
  return "none";
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::config, std::string("invalid training configuration: ") + what);
  };
  require(batch >= 1, "train.batch must be >= 1");
  require(iterations >= 0, "train.iterations must be >= 0");
  require(lr_gains > 0.0 && lr_positions > 0.0, "learning rates must be > 0");
  require(scheduler_factor > 0.0 && scheduler_factor < 1.0, "train.scheduler_factor must be in (0, 1)");
  require(scheduler_patience >= 0 && scheduler_cooldown >= 0, "scheduler patience and cooldown must be >= 0");
  require(scheduler_threshold >= 0.0, "train.scheduler_threshold must be >= 0");
  require(sigma_over_lambda > 0.0, "precoder.sigma_over_lambda must be > 0");
  require(omp_iters >= 1, "loss.omp_iters must be >= 1");
  require(eta_value >= 0.0 && eta_value <= 1.0, "loss.eta_value must be in [0, 1]");
  require(threads >= 1, "train.threads must be >= 1");
}

LearnableParams project(const LearnableParams& p) {
  LearnableParams out = p;
  std::vector<double> w(p.omegas.data(), p.omegas.data() + p.omegas.size());
  std::sort(w.begin(), w.end());
  for (std::size_t k = 1; k < w.size(); ++k)
    if (!(w[k] > w[k - 1])) w[k] = w[k - 1] + 1e-12;
  for (std::size_t k = 0; k < w.size(); ++k) out.omegas[static_cast<Eigen::Index>(k)] = w[k];
  for (Eigen::Index k = 0; k < out.betas.size(); ++k) {
    const double mag = std::abs(out.betas[k]);
    if (mag > 1.0) out.betas[k] /= mag;
  }
  return out;
}

ParamsPair project(const ParamsPair& p) { return {project(p.tx), project(p.rx)}; }

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = RVec::Zero(n);
  s.v = RVec::Zero(n);
  return s;
}

void adam_step(AdamState& s, RVec& x, const RVec& grad, const RVec& lrs) {
  if (!grad.allFinite()) fail(ErrorCode::numerical, "adam_step: non-finite gradient");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    x[i] -= lrs[i] * mhat / (std::sqrt(vhat) + s.eps);
  }
}

double PlateauScheduler::step(double loss) {
  if (loss < best - threshold * std::abs(best) || std::isinf(best)) {
    best = loss;
    num_bad = 0;
  } else {
    ++num_bad;
  }
  if (cooldown_counter > 0) {
    --cooldown_counter;
    num_bad = 0;
  }
  if (num_bad > patience) {
    multiplier *= factor;
    ++reductions;
    cooldown_counter = cooldown;
    num_bad = 0;
  }
  return multiplier;
}

const char* TrainLog::csv_header() {
  return "iter,loss,sens_loss,comm_loss,lr_mult_gain,lr_mult_pos,grad_norm_tx,grad_norm_rx";
}

void TrainLog::write_csv(std::ostream& os) const {
  os << csv_header() << '\n';
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.loss, r.sens_loss,
                  r.comm_loss, r.lr_mult_gain, r.lr_mult_pos, r.grad_norm_tx, r.grad_norm_rx);
    os << buf;
  }
}

ParamsPair initial_params(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth) {
  ParamsPair p = ParamsPair::ideal(env.waveform.num_antennas, env.waveform.wavelength);
  if (cfg.tx_known) p.tx = LearnableParams::from(truth.tx);
  return p;
}

TrainState initial_state(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth) {
  TrainState s;
  s.params = ParamVector::pack(initial_params(cfg, env, truth));
  s.adam = AdamState::zeros(s.params.values.size());
  s.scheduler.factor = cfg.scheduler_factor;
  s.scheduler.patience = cfg.scheduler_patience;
  s.scheduler.cooldown = cfg.scheduler_cooldown;
  s.scheduler.threshold = cfg.scheduler_threshold;
  return s;
}

SampleContext draw_context(const Environment& env, Rng& rng) {
  SampleContext c;
  std::tie(c.sensing_sector, c.comm_sector) = draw_sectors(env.scenario, env.waveform.field_of_view, rng);
  c.omega_r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  c.sensing = draw_sensing_scene(env.scenario, c.sensing_sector, rng);
  c.comm = draw_comm_scene(env.scenario, env.waveform, c.comm_sector, rng);
  c.symbols = draw_symbols(env.waveform.num_subcarriers, env.constellation, rng);
  return c;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;

enum Role : std::uint64_t { role_context = 0, role_perturb = 1, role_sensing_noise = 2, role_comm_noise = 3 };

struct SampleOut {
  double sensing = 0.0;
  double comm = 0.0;
  double eta = 1.0;
  bool has_targets = false;
  RVec grad_sensing; // 6K, already weighted by eta
  RVec grad_comm;    // 6K, already weighted by (1 - eta)
};

class BatchRunner {
 public:
  BatchRunner(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth, std::uint64_t seed)
      : cfg_(cfg), env_(env), truth_(truth), seed_(seed) {
    if (cfg.mode == TrainMode::slcb || cfg.mode == TrainMode::slcb_perturbed)
      privileged_ = std::make_unique<PrivilegedChannel>(truth, env.waveform);
  }

  SampleOut run(int iter, int j, const ParamsPair& params, const std::shared_ptr<const AngularDictionary>& angular) const {
    const int K = env_.waveform.num_antennas;
    const double lambda = env_.waveform.wavelength;
    const auto u_iter = static_cast<std::uint64_t>(iter);
    const auto u_j = static_cast<std::uint64_t>(j);

    Rng ctx_rng = make_rng(seed_, {kTrainStream, u_iter, u_j, role_context});
    const SampleContext ctx = draw_context(env_, ctx_rng);

    SampleOut out;
    out.eta = cfg_.eta_mode == EtaMode::tied ? ctx.omega_r : cfg_.eta_value;
    out.has_targets = !ctx.sensing.targets.empty();
    out.grad_sensing = RVec::Zero(6 * K);
    out.grad_comm = RVec::Zero(6 * K);

    const PrecoderInputs pin{ctx.sensing_sector, ctx.comm_sector, &env_.precoder_grid, ctx.omega_r,
                             env_.waveform.tx_power, lambda};
    const Precoder f = build_precoder(pin, params.tx);
    const bool perturbed =
        (cfg_.mode == TrainMode::unsupervised && cfg_.train_tx) || cfg_.mode == TrainMode::slcb_perturbed;
    PerturbedPrecoder pp{f.weights, f.weights, cfg_.sigma_over_lambda * lambda};
    if (perturbed) {
      Rng prng = make_rng(seed_, {kTrainStream, u_iter, u_j, role_perturb});
      pp = perturb(f, cfg_.sigma_over_lambda * lambda, prng);
    }
    const CVec& x = ctx.symbols.symbols;

    Rng srng = make_rng(seed_, {kTrainStream, u_iter, u_j, role_sensing_noise});
    Rng crng = make_rng(seed_, {kTrainStream, u_iter, u_j, role_comm_noise});
    const SensingObservation ys =
        sensing_forward(ctx.sensing, pp.weights, x, truth_, env_.waveform, env_.noise_psd_sensing, srng);
    const CommObservation yc =
        comm_forward(ctx.comm, pp.weights, x, truth_.tx, env_.waveform, env_.noise_psd_comm, crng);

    const double sn = env_.sensing_noise_variance();
    const double cn = env_.comm_noise_variance();
    CMat J;
    if (cfg_.train_tx) J = precoder_jacobian(pin, params.tx);

    if (cfg_.mode == TrainMode::unsupervised) {
      const Dictionaries dict =
          attach_delays(angular, make_delay_grid(ctx.sensing.range_min, ctx.sensing.range_max, env_.n_tau), x,
                        env_.waveform.subcarrier_spacing);
      const RxLossGrad rx = grad_rx_loss(cfg_.loss_kind, ys.Y, dict, params.rx, lambda, cfg_.omp_iters);
      out.sensing = rx.loss / sn;
      out.comm = loss_comm_energy(yc) / cn;
      if (cfg_.train_rx) out.grad_sensing.tail(3 * K) = out.eta * rx.grad / sn;
      if (cfg_.train_tx) {
        const RVec score = log_pdf_grad(pp, J);
        out.grad_sensing.head(3 * K) += out.eta * out.sensing * score;
        out.grad_comm.head(3 * K) = (1.0 - out.eta) * out.comm * score;
      }
    } else {
      // Supervised sensing loss is scaled by the matched-filter noise level K S sigma^2.
      const double ss = sn * K * env_.waveform.num_subcarriers;
      const std::vector<TargetCell> cells = target_cells(ctx.sensing);
      out.sensing = slcb_sensing_loss(ys.Y, cells, params.rx, x, env_.waveform) / ss;
      out.comm = slcb_comm_loss(yc, ctx.symbols.indices, ctx.symbols.constellation);
      if (cfg_.train_rx && out.has_targets)
        out.grad_sensing.tail(3 * K) = out.eta * grad_slcb_sensing_rx(ys.Y, cells, params.rx, x, env_.waveform) / ss;
      if (cfg_.train_tx) {
        CVec g = (1.0 - out.eta) * privileged_->comm_cotangent(ctx.comm, yc, ctx.symbols);
        out.grad_comm.head(3 * K) = chain_precoder(g, J);
        if (out.has_targets) {
          const CVec gs = privileged_->sensing_cotangent(ctx.sensing, ys.Y, cells, params.rx, x);
          out.grad_sensing.head(3 * K) = chain_precoder(out.eta * gs / ss, J);
        }
      }
    }

    if (!std::isfinite(out.sensing) || !std::isfinite(out.comm) || !out.grad_sensing.allFinite() ||
        !out.grad_comm.allFinite())
      fail(ErrorCode::numerical, "training produced a non-finite loss or gradient at iteration " +
                                     std::to_string(iter) + ", sample " + std::to_string(j));
    return out;
  }

 private:
  const TrainConfig& cfg_;
  const Environment& env_;
  const ArrayPair& truth_;
  std::uint64_t seed_;
  std::unique_ptr<PrivilegedChannel> privileged_;
};

RVec learning_rates(const TrainConfig& cfg, int K, double mult) {
  RVec lrs = RVec::Zero(6 * K);
  auto fill = [&](Eigen::Index off) {
    lrs.segment(off, 2 * K).setConstant(cfg.lr_gains * mult);
    lrs.segment(off + 2 * K, K).setConstant(cfg.lr_positions * mult);
  };
  if (cfg.train_tx) fill(0);
  if (cfg.train_rx) fill(3 * K);
  return lrs;
}

} // namespace

TrainResult train(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth, std::uint64_t seed,
                  const TrainObserver& observer) {
  return train(cfg, env, truth, seed, initial_state(cfg, env, truth), observer);
}

TrainResult train(const TrainConfig& cfg, const Environment& env, const ArrayPair& truth, std::uint64_t seed,
                  TrainState state, const TrainObserver& observer) {
  cfg.validate();
  const int K = env.waveform.num_antennas;
  if (state.params.values.size() != 6 * K) fail(ErrorCode::invalid_argument, "train: state does not match K");

  TrainResult result;
  const int start = state.iteration;
  if (cfg.mode != TrainMode::none && (cfg.train_tx || cfg.train_rx)) {
    BatchRunner runner(cfg, env, truth, seed);
    std::vector<SampleOut> outs(cfg.batch);
    for (int iter = start; iter < cfg.iterations; ++iter) {
      const ParamsPair params = state.params.unpack();
      const auto angular = AngularDictionary::build(env.angle_grid, params.rx, env.waveform.wavelength);
      parallel_for(cfg.batch, cfg.threads, [&](int j) { outs[j] = runner.run(iter, j, params, angular); });

      const bool supervised = cfg.mode != TrainMode::unsupervised;
      int with_targets = 0;
      for (const auto& o : outs) with_targets += o.has_targets;
      const double B = static_cast<double>(cfg.batch);
      // Supervised sensing terms average over samples that contain targets only.
      const double sens_weight = supervised ? (with_targets > 0 ? B / with_targets : 0.0) : 1.0;

      RVec grad = RVec::Zero(6 * K);
      double loss = 0.0, sens = 0.0, comm = 0.0;
      for (const auto& o : outs) {
        const double ws = (!supervised || o.has_targets) ? sens_weight : 0.0;
        grad += ws * o.grad_sensing + o.grad_comm;
        loss += ws * o.eta * o.sensing + (1.0 - o.eta) * o.comm;
        sens += ws * o.sensing;
        comm += o.comm;
      }
      grad /= B;
      loss /= B;
      sens /= B;
      comm /= B;

      adam_step(state.adam, state.params.values, grad, learning_rates(cfg, K, state.scheduler.multiplier));
      state.scheduler.step(loss);
      const ParamsPair projected = project(state.params.unpack());
      if (!projected.tx.feasible() || !projected.rx.feasible())
        fail(ErrorCode::numerical, "projection left infeasible parameters at iteration " + std::to_string(iter));
      state.params = ParamVector::pack(projected);
      state.iteration = iter + 1;

      TrainLogRow row{iter, loss, sens, comm, state.scheduler.multiplier, state.scheduler.multiplier,
                      grad.head(3 * K).norm(), grad.tail(3 * K).norm()};
      result.log.rows.push_back(row);
      if (observer) observer(state, row);
    }
  }
  result.params = state.params.unpack();
  result.state = std::move(state);
  return result;
}

} // namespace isaccal
