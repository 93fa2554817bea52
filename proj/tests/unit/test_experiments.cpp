#include <doctest.h>

#include <cmath>
#include <limits>

#include "isaccal/config.hpp"
#include "isaccal/experiments.hpp"
#include "isaccal/selftest.hpp"

using namespace isaccal;

namespace {

struct Setup {
  Config cfg = small_config(4, 8);
  Environment env = cfg.environment();
  ArrayPair truth = draw_array_pair(4, cfg.waveform.wavelength, 5);
  ParamsPair matched = ParamsPair::from(truth);
};

EvalOptions options(int samples) {
  EvalOptions o;
  o.samples = samples;
  o.seed = 9;
  o.max_iter = 6;
  return o;
}

} // namespace

TEST_CASE("operating points span the threshold range") {
  Setup s;
  const SensingEval eval = evaluate_sensing(s.env, s.matched, s.truth, options(400));
  const GospaConfig g = s.cfg.gospa();

  const OperatingPoint none = operating_point(eval, 1e300, g);
  CHECK(none.p_fa == 0.0);
  CHECK(none.p_md == 1.0);
  CHECK(none.detections == 0);
  const OperatingPoint all = operating_point(eval, 0.0, g);
  CHECK(all.p_md == 0.0);
  CHECK(all.detections == 400L * 6);

  double last_fa = std::numeric_limits<double>::infinity(), last_md = -1.0;
  for (double d : {0.0, 1e-16, 1e-14, 1e-12, 1e-10, 1e300}) {
    const OperatingPoint op = operating_point(eval, d, g);
    CHECK(op.p_fa <= last_fa);
    CHECK(op.p_md >= last_md);
    CHECK(op.gospa >= 0.0);
    last_fa = op.p_fa;
    last_md = op.p_md;
  }
}

TEST_CASE("operating point at a false-alarm target is the smallest admissible threshold") {
  Setup s;
  const SensingEval eval = evaluate_sensing(s.env, s.matched, s.truth, options(300));
  const GospaConfig g = s.cfg.gospa();
  for (double target : {0.0, 0.01, 0.1, 0.5}) {
    const OperatingPoint op = operating_point_at_pfa(eval, target, g);
    CHECK(op.p_fa <= target + 1e-15);
    if (op.delta > 0.0) {
      const OperatingPoint below = operating_point(eval, std::nextafter(op.delta, 0.0), g);
      CHECK(below.p_fa > target);
    }
  }
}

TEST_CASE("evaluations are deterministic and thread-count independent") {
  Setup s;
  EvalOptions a = options(120);
  EvalOptions b = a;
  b.threads = 3;
  const SensingEval e1 = evaluate_sensing(s.env, s.matched, s.truth, a);
  const SensingEval e2 = evaluate_sensing(s.env, s.matched, s.truth, b);
  REQUIRE(e1.records.size() == e2.records.size());
  for (std::size_t i = 0; i < e1.records.size(); ++i) CHECK(e1.records[i].guards == e2.records[i].guards);

  a.omega_r = 0.3;
  b.omega_r = 0.3;
  const SerResult r1 = evaluate_ser(s.env, s.matched, s.truth, a);
  const SerResult r2 = evaluate_ser(s.env, s.matched, s.truth, b);
  CHECK(r1.errors == r2.errors);
  CHECK(r1.symbols == 120L * 8);
}

TEST_CASE("noise threshold meets its false-alarm target on fresh noise") {
  Setup s;
  EvalOptions cal = options(1500);
  const double delta = noise_threshold(s.env, s.matched, s.truth, cal, 0.05);
  CHECK(delta > 0.0);
  EvalOptions fresh = options(1500);
  fresh.seed = 77;
  fresh.targets = false;
  const SensingEval eval = evaluate_sensing(s.env, s.matched, s.truth, fresh);
  const OperatingPoint op = operating_point(eval, delta, s.cfg.gospa());
  CHECK(op.p_fa <= 0.05 * 1.5);
  CHECK(std::isnan(op.p_md)); // no targets to miss
}

TEST_CASE("communication-only split has fewer symbol errors than sensing-only") {
  Setup s;
  EvalOptions o = options(400);
  o.omega_r = 0.0;
  const SerResult comm = evaluate_ser(s.env, s.matched, s.truth, o);
  o.omega_r = 1.0;
  const SerResult sens = evaluate_ser(s.env, s.matched, s.truth, o);
  CHECK(comm.ser < sens.ser);
}

TEST_CASE("precoder response peaks inside the sensing sector for a sensing-only split") {
  Setup s;
  const Sector sensing{deg2rad(-40.0), deg2rad(-20.0)};
  const Sector comm{deg2rad(30.0), deg2rad(40.0)};
  const RVec r = precoder_response_db(s.env, s.matched.tx, s.truth.tx, sensing, comm, 1.0);
  REQUIRE(r.size() == static_cast<Eigen::Index>(s.env.precoder_grid.size()));
  Eigen::Index arg = 0;
  r.maxCoeff(&arg);
  const double peak = s.env.precoder_grid[static_cast<std::size_t>(arg)];
  CHECK(peak >= deg2rad(-50.0));
  CHECK(peak <= deg2rad(-10.0));
}

TEST_CASE("reference context and noiseless ADM snapshot") {
  Setup s;
  const SampleContext ctx = reference_context(s.env, 4);
  CHECK(static_cast<int>(ctx.sensing.targets.size()) == s.env.scenario.t_max);
  const AdmSnapshot snap = adm_snapshot(s.env, s.matched.rx, s.truth, ctx, 0.0, 4, 6);
  CHECK(snap.map.rows() == static_cast<Eigen::Index>(snap.angles.size()));
  CHECK(snap.map.cols() == static_cast<Eigen::Index>(snap.delays.size()));
  CHECK(snap.omp.residual_norms.front() > 0.0);
  CHECK(snap.omp.residual_norms.back() < snap.omp.residual_norms.front());
}
