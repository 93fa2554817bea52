#include "isaccal/selftest.hpp"

#include <cmath>

#include "isaccal/channel.hpp"
#include "isaccal/precoder.hpp"

namespace isaccal {

namespace {

constexpr double kStep = 1e-7;

struct Instance {
  Environment env;
  ArrayPair truth;
  ParamsPair params; // evaluation point, away from the truth
  SampleContext ctx;
  std::vector<double> delays;
  std::uint64_t noise_seed = 0;
};

LearnableParams jitter(const LearnableParams& p, double wavelength, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LearnableParams q = p;
  for (int k = 0; k < q.size(); ++k) {
    q.betas[k] *= std::polar(0.9 + 0.05 * u(rng), 0.3 * u(rng));
    q.omegas[k] += 0.05 * wavelength * u(rng);
  }
  return project(q);
}

Instance make_instance(std::uint64_t seed, int index) {
  Instance in;
  const Config cfg = small_config();
  in.env = cfg.environment_at_snr(cfg.scenario.snr_s_db + 20.0);
  const double lambda = in.env.waveform.wavelength;
  Rng rng = make_rng(seed, {0x66640000, static_cast<std::uint64_t>(index)});
  in.truth = draw_array_pair(in.env.waveform.num_antennas, lambda, seed + 1000003ULL * (index + 1));
  in.params = {jitter(LearnableParams::from(in.truth.tx), lambda, rng),
               jitter(LearnableParams::from(in.truth.rx), lambda, rng)};
  for (int attempt = 0;; ++attempt) {
    in.ctx = draw_context(in.env, rng);
    if (!in.ctx.sensing.targets.empty()) break;
    if (attempt > 1000) fail(ErrorCode::scene_generation, "selftest: no targets drawn");
  }
  in.delays = make_delay_grid(in.ctx.sensing.range_min, in.ctx.sensing.range_max, in.env.n_tau);
  in.noise_seed = seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return in;
}

PrecoderInputs inputs(const Instance& in) {
  return {in.ctx.sensing_sector, in.ctx.comm_sector, &in.env.precoder_grid, in.ctx.omega_r,
          in.env.waveform.tx_power, in.env.waveform.wavelength};
}

CMat sensing_y(const Instance& in, const LearnableParams& tx) {
  Rng rng = make_rng(in.noise_seed, {1});
  const Precoder f = build_precoder(inputs(in), tx);
  return sensing_forward(in.ctx.sensing, f.weights, in.ctx.symbols.symbols, in.truth, in.env.waveform,
                         in.env.noise_psd_sensing, rng)
      .Y;
}

CommObservation comm_obs(const Instance& in, const LearnableParams& tx) {
  Rng rng = make_rng(in.noise_seed, {2});
  const Precoder f = build_precoder(inputs(in), tx);
  return comm_forward(in.ctx.comm, f.weights, in.ctx.symbols.symbols, in.truth.tx, in.env.waveform,
                      in.env.noise_psd_comm, rng);
}

Dictionaries dictionaries(const Instance& in, const LearnableParams& rx) {
  return build_dictionaries(in.env.angle_grid, in.delays, rx, in.ctx.symbols.symbols, in.env.waveform.wavelength,
                            in.env.waveform.subcarrier_spacing);
}

double check_rx_loss(const Instance& in, SensingLossKind kind, int iters, Rng& rng) {
  const CMat Y = sensing_y(in, in.params.tx);
  const double lambda = in.env.waveform.wavelength;
  const RxLossGrad g = grad_rx_loss(kind, Y, dictionaries(in, in.params.rx), in.params.rx, lambda, iters);
  const FrozenSupport support = FrozenSupport::from(omp(Y, dictionaries(in, in.params.rx), 0.0, iters));
  auto f = [&](const RVec& v) {
    const Dictionaries d = dictionaries(in, unpack_array(v));
    return kind == SensingLossKind::adm_max ? loss_adm_max(Y, d) : refit_support(Y, d, support).loss;
  };
  return fd_check(f, pack_array(in.params.rx), g.grad, 4, rng, kStep);
}

double check_slcb_sensing_rx(const Instance& in, Rng& rng) {
  const CMat Y = sensing_y(in, in.params.tx);
  const auto cells = target_cells(in.ctx.sensing);
  const CVec& x = in.ctx.symbols.symbols;
  const RVec g = grad_slcb_sensing_rx(Y, cells, in.params.rx, x, in.env.waveform);
  auto f = [&](const RVec& v) { return slcb_sensing_loss(Y, cells, unpack_array(v), x, in.env.waveform); };
  return fd_check(f, pack_array(in.params.rx), g, 4, rng, kStep);
}

double check_slcb_sensing_tx(const Instance& in, Rng& rng) {
  const auto cells = target_cells(in.ctx.sensing);
  const CVec& x = in.ctx.symbols.symbols;
  const PrivilegedChannel channel(in.truth, in.env.waveform);
  const CMat Y = sensing_y(in, in.params.tx);
  const CVec cot = channel.sensing_cotangent(in.ctx.sensing, Y, cells, in.params.rx, x);
  const RVec g = chain_precoder(cot, precoder_jacobian(inputs(in), in.params.tx));
  auto f = [&](const RVec& v) {
    return slcb_sensing_loss(sensing_y(in, unpack_array(v)), cells, in.params.rx, x, in.env.waveform);
  };
  return fd_check(f, pack_array(in.params.tx), g, 4, rng, kStep);
}

double check_slcb_comm_tx(const Instance& in, Rng& rng) {
  const PrivilegedChannel channel(in.truth, in.env.waveform);
  const CommObservation obs = comm_obs(in, in.params.tx);
  const CVec cot = channel.comm_cotangent(in.ctx.comm, obs, in.ctx.symbols);
  const RVec g = chain_precoder(cot, precoder_jacobian(inputs(in), in.params.tx));
  auto f = [&](const RVec& v) {
    return slcb_comm_loss(comm_obs(in, unpack_array(v)), in.ctx.symbols.indices, in.ctx.symbols.constellation);
  };
  return fd_check(f, pack_array(in.params.tx), g, 4, rng, kStep);
}

double check_precoder_jacobian(const Instance& in, Rng& rng) {
  const CVec c = complex_gaussian(in.env.waveform.num_antennas, 1.0, rng);
  const RVec g = chain_precoder(0.5 * c, precoder_jacobian(inputs(in), in.params.tx));
  auto f = [&](const RVec& v) { return c.dot(build_precoder(inputs(in), unpack_array(v)).weights).real(); };
  return fd_check(f, pack_array(in.params.tx), g, 4, rng, kStep);
}

} // namespace

Config small_config(int num_antennas, int num_subcarriers) {
  nlohmann::json tree = preset_tree("desk");
  tree["waveform"]["K"] = num_antennas;
  tree["waveform"]["S"] = num_subcarriers;
  tree["sensing"]["n_theta"] = 31;
  return config_from_tree(tree);
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed, int instances) {
  struct Path {
    const char* name;
    double tolerance;
    std::function<double(const Instance&, Rng&)> run;
  };
  const std::vector<Path> paths{
      {"grad adm_max", 1e-4, [](const Instance& in, Rng& r) { return check_rx_loss(in, SensingLossKind::adm_max, 1, r); }},
      {"grad omp_residual (1 iteration)", 1e-4,
       [](const Instance& in, Rng& r) { return check_rx_loss(in, SensingLossKind::omp_residual, 1, r); }},
      {"grad omp_residual (3 iterations, least squares)", 1e-3,
       [](const Instance& in, Rng& r) { return check_rx_loss(in, SensingLossKind::omp_residual, 3, r); }},
      {"grad slcb sensing rx", 1e-4, check_slcb_sensing_rx},
      {"grad slcb sensing tx", 1e-4, check_slcb_sensing_tx},
      {"grad slcb comm cce", 1e-4, check_slcb_comm_tx},
      {"precoder jacobian", 1e-4, check_precoder_jacobian},
  };
  std::vector<CheckResult> out;
  for (const auto& p : paths) out.push_back({p.name, 0.0, p.tolerance, true});
  for (int i = 0; i < instances; ++i) {
    const Instance in = make_instance(seed, i);
    for (std::size_t k = 0; k < paths.size(); ++k) {
      Rng rng = make_rng(seed, {0x6664, static_cast<std::uint64_t>(i), k});
      out[k].value = std::max(out[k].value, paths[k].run(in, rng));
    }
  }
  for (auto& r : out) r.passed = r.value <= r.tolerance;
  return out;
}

RecoveryCheck exact_recovery_check(std::uint64_t seed) {
  const Config cfg = small_config(8, 16);
  const Environment env = cfg.environment();
  const double lambda = env.waveform.wavelength;
  Rng rng = make_rng(seed, {0x6f6d70});
  const ArrayPair truth = draw_array_pair(env.waveform.num_antennas, lambda, seed + 17);
  const SymbolBlock sym = draw_symbols(env.waveform.num_subcarriers, env.constellation, rng);
  const std::vector<double> delays = make_delay_grid(env.scenario.range_min, env.scenario.range_max, env.n_tau);
  const Dictionaries dict = build_dictionaries(env.angle_grid, delays, LearnableParams::from(truth.rx), sym.symbols,
                                               lambda, env.waveform.subcarrier_spacing);
  std::uniform_int_distribution<int> ui(0, dict.num_angles() - 1), uj(0, dict.num_delays() - 1);
  const int i0 = ui(rng), j0 = uj(rng);
  const cplx gain = std::polar(0.7, 1.1);
  const CMat Y = gain * dict.angle_atoms().col(i0) * dict.delay_atoms.col(j0).transpose();
  const OmpResult r = omp(Y, dict, 1e-6 * Y.squaredNorm(), 1);
  RecoveryCheck c;
  c.cell_correct = r.size() == 1 && r.detections[0].angle_index == i0 && r.detections[0].delay_index == j0;
  if (r.size() == 1) c.gain_rel_error = std::abs(r.gains[0] - gain) / std::abs(gain);
  c.residual_rel = std::sqrt(r.residual_norms.back() / Y.squaredNorm());
  return c;
}

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  std::vector<CheckResult> out = gradient_checks(seed, 3);

  const RecoveryCheck rc = exact_recovery_check(seed);
  out.push_back({"omp exact recovery cell", rc.cell_correct ? 0.0 : 1.0, 0.0, rc.cell_correct});
  out.push_back({"omp exact recovery gain", rc.gain_rel_error, 1e-9, rc.gain_rel_error <= 1e-9});
  out.push_back({"omp exact recovery residual", rc.residual_rel, 1e-9, rc.residual_rel <= 1e-9});

  const GospaConfig g{10.0, 2.0, 2.0};
  const std::vector<Point2> one{{1.0, 2.0}}, none;
  const double miss = std::abs(gospa(one, none, g) - 10.0 / std::sqrt(2.0));
  out.push_back({"gospa single miss", miss, 1e-12, miss <= 1e-12});
  Rng rng = make_rng(seed, {0x67});
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double asym = 0.0, self = 0.0;
  for (int n = 0; n < 200; ++n) {
    std::vector<Point2> a(n % 4), b((n / 4) % 4);
    for (auto& p : a) p = {u(rng), u(rng)};
    for (auto& p : b) p = {u(rng), u(rng)};
    asym = std::max(asym, std::abs(gospa(a, b, g) - gospa(b, a, g)));
    self = std::max(self, gospa(a, a, g));
  }
  out.push_back({"gospa symmetry", asym, 1e-12, asym <= 1e-12});
  out.push_back({"gospa identity", self, 1e-12, self <= 1e-12});
  return out;
}

} // namespace isaccal
