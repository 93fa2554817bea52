#include "isaccal/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "isaccal/channel.hpp"
#include "isaccal/comm_rx.hpp"
#include "isaccal/gradients.hpp"
#include "isaccal/precoder.hpp"

namespace isaccal {

namespace {

constexpr std::uint64_t kTestStream = 0x74657374;

enum Role : std::uint64_t { role_context = 0, role_sensing_noise = 2, role_comm_noise = 3 };

struct TestSample {
  SampleContext ctx;
  double omega_r = 0.5;
};

TestSample test_sample(const Environment& env, const EvalOptions& opt, int i) {
  Rng rng = make_rng(opt.seed, {kTestStream, static_cast<std::uint64_t>(i), role_context});
  TestSample s{draw_context(env, rng)};
  if (!opt.targets) s.ctx.sensing.targets.clear();
  s.omega_r = opt.omega_r.value_or(s.ctx.omega_r);
  return s;
}

Precoder precoder_for(const Environment& env, const SampleContext& ctx, double omega_r, const LearnableParams& tx) {
  const PrecoderInputs pin{ctx.sensing_sector, ctx.comm_sector, &env.precoder_grid, omega_r, env.waveform.tx_power,
                           env.waveform.wavelength};
  return build_precoder(pin, tx);
}

} // namespace

SensingEval evaluate_sensing(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                             const EvalOptions& opt) {
  if (opt.samples < 1) fail(ErrorCode::invalid_argument, "evaluate_sensing: need at least one sample");
  SensingEval out;
  out.t_max = env.scenario.t_max;
  out.records.resize(opt.samples);
  const auto angular = AngularDictionary::build(env.angle_grid, params.rx, env.waveform.wavelength);
  parallel_for(opt.samples, opt.threads, [&](int i) {
    const TestSample s = test_sample(env, opt, i);
    const Precoder f = precoder_for(env, s.ctx, s.omega_r, params.tx);
    const CVec& x = s.ctx.symbols.symbols;
    Rng nrng = make_rng(opt.seed, {kTestStream, static_cast<std::uint64_t>(i), role_sensing_noise});
    const SensingObservation obs =
        sensing_forward(s.ctx.sensing, f.weights, x, truth, env.waveform, env.noise_psd_sensing, nrng);
    const Dictionaries dict =
        attach_delays(angular, make_delay_grid(s.ctx.sensing.range_min, s.ctx.sensing.range_max, env.n_tau), x,
                      env.waveform.subcarrier_spacing);
    OmpResult r = omp(obs.Y, dict, 0.0, opt.max_iter);
    SensingRecord& rec = out.records[i];
    for (const auto& t : s.ctx.sensing.targets) rec.truth.push_back(position_from(t.angle, t.delay()));
    rec.detections = std::move(r.detections);
    rec.guards = std::move(r.guard_values);
  });
  return out;
}

namespace {

double pfa_only(const SensingEval& eval, double delta) {
  double fa = 0.0, total = 0.0;
  for (const auto& r : eval.records) {
    const int T = static_cast<int>(r.truth.size());
    const int That = detections_at(r.guards, delta);
    fa += std::max(T, That) - T;
    total += eval.t_max - T;
  }
  return total > 0.0 ? fa / total : 0.0;
}

} // namespace

OperatingPoint operating_point(const SensingEval& eval, double delta, const GospaConfig& gospa_cfg) {
  std::vector<CountPair> counts;
  counts.reserve(eval.records.size());
  double gsum = 0.0;
  OperatingPoint op;
  op.delta = delta;
  for (const auto& r : eval.records) {
    const int That = detections_at(r.guards, delta);
    counts.push_back({static_cast<int>(r.truth.size()), That});
    op.detections += That;
    const auto est = positions_from(std::span<const Detection>(r.detections.data(), static_cast<std::size_t>(That)));
    gsum += gospa(r.truth, est, gospa_cfg);
  }
  op.p_md = pmd(counts);
  op.p_fa = pfa(counts, eval.t_max);
  op.gospa = eval.records.empty() ? 0.0 : gsum / static_cast<double>(eval.records.size());
  return op;
}

OperatingPoint operating_point_at_pfa(const SensingEval& eval, double target_pfa, const GospaConfig& gospa_cfg) {
  std::vector<double> candidates{0.0};
  for (const auto& r : eval.records) candidates.insert(candidates.end(), r.guards.begin(), r.guards.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::size_t lo = 0, hi = candidates.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (pfa_only(eval, candidates[mid]) <= target_pfa)
      hi = mid;
    else
      lo = mid + 1;
  }
  return operating_point(eval, candidates[lo], gospa_cfg);
}

double noise_threshold(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                       const EvalOptions& opt, double target_pfa) {
  EvalOptions noise = opt;
  noise.targets = false;
  const SensingEval eval = evaluate_sensing(env, params, truth, noise);
  std::vector<std::vector<double>> guards;
  guards.reserve(eval.records.size());
  for (const auto& r : eval.records) guards.push_back(r.guards);
  return calibrate_threshold(guards, target_pfa, env.scenario.t_max);
}

SerResult evaluate_ser(const Environment& env, const ParamsPair& params, const ArrayPair& truth,
                       const EvalOptions& opt) {
  std::vector<long> errors(opt.samples, 0);
  parallel_for(opt.samples, opt.threads, [&](int i) {
    const TestSample s = test_sample(env, opt, i);
    const Precoder f = precoder_for(env, s.ctx, s.omega_r, params.tx);
    Rng nrng = make_rng(opt.seed, {kTestStream, static_cast<std::uint64_t>(i), role_comm_noise});
    const CommObservation obs =
        comm_forward(s.ctx.comm, f.weights, s.ctx.symbols.symbols, truth.tx, env.waveform, env.noise_psd_comm, nrng);
    const DetectionResult det = ml_detect(obs, env.constellation);
    long e = 0;
    for (std::size_t k = 0; k < det.indices.size(); ++k) e += det.indices[k] != s.ctx.symbols.indices[k];
    errors[i] = e;
  });
  SerResult r;
  for (long e : errors) r.errors += e;
  r.symbols = static_cast<long>(opt.samples) * env.waveform.num_subcarriers;
  r.ser = r.symbols > 0 ? static_cast<double>(r.errors) / static_cast<double>(r.symbols) : 0.0;
  return r;
}

RVec precoder_response_db(const Environment& env, const LearnableParams& tx_params, const ArrayImpairments& tx_truth,
                          const Sector& sensing, const Sector& comm, double omega_r) {
  const PrecoderInputs pin{sensing, comm, &env.precoder_grid, omega_r, env.waveform.tx_power, env.waveform.wavelength};
  const Precoder f = build_precoder(pin, tx_params);
  return precoder_response(tx_truth.gains, tx_truth.positions, f.weights, env.precoder_grid, env.waveform.wavelength);
}

SampleContext reference_context(const Environment& env, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x726566});
  SampleContext ctx = draw_context(env, rng);
  ctx.sensing_sector = {deg2rad(-40.0), deg2rad(-20.0)};
  ctx.comm_sector = {deg2rad(30.0), deg2rad(40.0)};
  ctx.omega_r = 0.75;
  const int wanted = std::max(2, env.scenario.t_max);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    ctx.sensing = draw_sensing_scene(env.scenario, ctx.sensing_sector, rng);
    if (static_cast<int>(ctx.sensing.targets.size()) >= std::min(wanted, env.scenario.t_max)) return ctx;
  }
  fail(ErrorCode::scene_generation, "reference_context: could not draw a multi-target scene");
}

AdmSnapshot adm_snapshot(const Environment& env, const LearnableParams& rx_params, const ArrayPair& truth,
                         const SampleContext& ctx, double noise_psd, std::uint64_t noise_seed, int max_iter) {
  const PrecoderInputs pin{ctx.sensing_sector, ctx.comm_sector, &env.precoder_grid, ctx.omega_r,
                           env.waveform.tx_power, env.waveform.wavelength};
  const Precoder f = build_precoder(pin, LearnableParams::from(truth.tx));
  Rng rng = make_rng(noise_seed, {0x61646d});
  const CVec& x = ctx.symbols.symbols;
  const SensingObservation obs = sensing_forward(ctx.sensing, f.weights, x, truth, env.waveform, noise_psd, rng);
  const Dictionaries dict =
      build_dictionaries(env.angle_grid, make_delay_grid(ctx.sensing.range_min, ctx.sensing.range_max, env.n_tau),
                         rx_params, x, env.waveform.wavelength, env.waveform.subcarrier_spacing);
  AdmSnapshot snap;
  snap.angles = dict.angles();
  snap.delays = dict.delays;
  snap.map = adm(obs.Y, dict);
  snap.omp = omp(obs.Y, dict, 0.0, max_iter);
  return snap;
}

} // namespace isaccal
