#include <doctest.h>

#include <cmath>

#include "isaccal/config.hpp"
#include "isaccal/gradients.hpp"
#include "isaccal/selftest.hpp"
#include "isaccal/trainer.hpp"
#include "oracles.hpp"

using namespace isaccal;

TEST_CASE("parameter packing") {
  const ArrayPair truth = draw_array_pair(5, 0.005, 1);
  const ParamsPair p = ParamsPair::from(truth);
  const ParamVector v = ParamVector::pack(p);
  CHECK(v.values.size() == 30);
  CHECK(v.num_antennas() == 5);
  CHECK(v.values[0] == truth.tx.gains[0].real());
  CHECK(v.values[5] == truth.tx.gains[0].imag());
  CHECK(v.values[10] == truth.tx.positions[0]);
  CHECK(v.values[15] == truth.rx.gains[0].real());
  const ParamsPair q = v.unpack();
  CHECK(q.tx.betas == p.tx.betas);
  CHECK(q.rx.omegas == p.rx.omegas);
  CHECK_THROWS_AS(unpack_array(RVec::Zero(7)), Error);
}

TEST_CASE("finite-difference harness") {
  Rng rng = make_rng(1);
  const RVec a = RVec::Random(6);
  auto linear = [&](const RVec& v) { return a.dot(v) + 3.0; };
  CHECK(fd_check(linear, RVec::Random(6), a, 10, rng) <= 1e-8);
  const RMat M = RMat::Random(6, 6);
  const RMat Q = M.transpose() * M;
  auto quad = [&](const RVec& v) { return v.dot(Q * v); };
  const RVec zero = RVec::Zero(6);
  CHECK(fd_check(quad, zero, 2.0 * Q * zero, 10, rng, 1e-6, 1e-12) <= 1e-10);
  const RVec x = RVec::Random(6);
  CHECK(fd_check(quad, x, 2.0 * Q * x, 10, rng) <= 1e-8);
  // a wrong gradient is detected
  CHECK(fd_check(quad, x, 2.1 * Q * x, 10, rng) > 1e-2);
}

TEST_CASE("every gradient path matches finite differences") {
  const auto checks = gradient_checks(11, 10);
  CHECK(checks.size() >= 7);
  for (const auto& c : checks) {
    INFO(c.name << " worst error " << c.value);
    CHECK(c.passed);
    CHECK(c.value <= c.tolerance);
    CHECK(c.tolerance <= (c.name.find("least squares") != std::string::npos ? 1e-3 : 1e-4));
  }
}

TEST_CASE("receive-loss gradients") {
  const Config cfg = small_config();
  const Environment env = cfg.environment();
  const double lambda = env.waveform.wavelength;
  Rng rng = make_rng(2);
  const CVec x = draw_symbols(8, Constellation::qpsk, rng).symbols;
  const LearnableParams rx = LearnableParams::from(draw_array_pair(4, lambda, 3).rx);
  const Dictionaries d = build_dictionaries(env.angle_grid, make_delay_grid(12.0, 30.0, env.n_tau), rx, x, lambda,
                                            env.waveform.subcarrier_spacing);

  for (SensingLossKind k : {SensingLossKind::adm_max, SensingLossKind::omp_residual}) {
    const RxLossGrad g = grad_rx_loss(k, CMat::Zero(4, 8), d, rx, lambda, 1);
    CHECK(g.grad.size() == 12);
    CHECK(g.grad.norm() == 0.0);
  }

  SUBCASE("hand-derived derivative of the map peak") {
    const CMat Y = CMat::Random(4, 8);
    const RMat L = adm(Y, d);
    Eigen::Index i, j;
    L.maxCoeff(&i, &j);
    const RVec g = grad_adm_max(Y, d, rx, lambda, static_cast<int>(i), static_cast<int>(j));
    const CVec Yv = Y * d.delay_atoms.col(j).conjugate();
    const cplx z = d.angle_atoms().col(i).adjoint() * Yv;
    const SteeringDerivative sd = steering_derivative(d.angles()[i], rx, lambda);
    for (int k = 0; k < 4; ++k) {
      const double ref = -2.0 * (std::conj(sd.d_re[k]) * Yv[k] * std::conj(z)).real();
      CHECK(g[k] == doctest::Approx(ref).epsilon(1e-12));
    }
  }
  SUBCASE("first-order accuracy while the selection is unchanged") {
    const CMat Y = CMat::Random(4, 8) + 4.0 * d.angle_atoms().col(50) * d.delay_atoms.col(3).transpose();
    const RxLossGrad g = grad_rx_loss(SensingLossKind::omp_residual, Y, d, rx, lambda, 2);
    const FrozenSupport support = FrozenSupport::from(omp(Y, d, 0.0, 2));
    const RVec v0 = pack_array(rx);
    const RVec dir = RVec::Random(12).normalized();
    double prev_err = 0.0;
    for (double eps : {1e-5, 1e-6}) {
      const RVec v = v0 + eps * dir;
      const LearnableParams p = unpack_array(v);
      const Dictionaries dp = build_dictionaries(env.angle_grid, d.delays, p, x, lambda, env.waveform.subcarrier_spacing);
      CHECK(FrozenSupport::from(omp(Y, dp, 0.0, 2)).cells == support.cells);
      const double err = std::abs(loss_omp_residual(Y, dp, 2) - g.loss - eps * g.grad.dot(dir));
      if (prev_err > 0.0) CHECK(err < 0.05 * prev_err); // quadratic remainder
      prev_err = err;
    }
  }
}

TEST_CASE("precoder Jacobian") {
  SUBCASE("single-element array") {
    const std::vector<double> grid{-0.2, 0.0, 0.3};
    const LearnableParams tx{CVec::Constant(1, cplx(0.6, -0.3)), RVec::Constant(1, 0.001)};
    const PrecoderInputs pin{Sector{-0.25, 0.05}, Sector{0.25, 0.35}, &grid, 1.0, 0.2, 0.005};
    const CMat J = precoder_jacobian(pin, tx);
    CHECK(J.rows() == 1);
    CHECK(J.cols() == 3);
    // f = sqrt(P) conj(b)/|b| * e^{j phi(w)}; derivative over Re b of conj(b)/|b| is 1/r - conj(b) a / r^3
    const cplx b = tx.betas[0];
    const double r = std::abs(b), a = b.real();
    const Precoder f = build_precoder(pin, tx);
    const cplx phase = f.weights[0] / (std::sqrt(0.2) * std::conj(b) / r);
    const cplx ref = std::sqrt(0.2) * phase * (1.0 / r - std::conj(b) * a / (r * r * r));
    CHECK(std::abs(J(0, 0) - ref) < 1e-12);
  }
  SUBCASE("column-wise finite differences") {
    const auto grid = make_angle_grid(kPi / 2.0, kPi / 180.0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const LearnableParams tx = LearnableParams::from(draw_array_pair(6, 0.005, seed).tx);
      const PrecoderInputs pin{Sector{-0.5, -0.3}, Sector{0.1, 0.4}, &grid, 0.3 + 0.1 * seed, 0.1, 0.005};
      const CMat J = precoder_jacobian(pin, tx);
      const RVec v = pack_array(tx);
      for (int c = 0; c < 18; ++c) {
        const double h = 1e-7 * (1.0 + std::abs(v[c]));
        RVec vp = v, vm = v;
        vp[c] += h;
        vm[c] -= h;
        const CVec fd = (build_precoder(pin, unpack_array(vp)).weights - build_precoder(pin, unpack_array(vm)).weights) /
                        (2.0 * h);
        CHECK((fd - J.col(c)).norm() <= 1e-4 * std::max(1e-6, J.col(c).norm()) + 1e-9);
      }
    }
  }
  SUBCASE("a silent element has no position derivative") {
    const auto grid = make_angle_grid(kPi / 2.0, kPi / 180.0);
    LearnableParams tx = LearnableParams::ideal(4, 0.005);
    tx.betas[2] = 0.0;
    const PrecoderInputs pin{Sector{-0.5, -0.3}, Sector{0.1, 0.4}, &grid, 0.5, 0.1, 0.005};
    const CMat J = precoder_jacobian(pin, tx);
    CHECK(J.col(8 + 2).norm() == 0.0);
  }
}

TEST_CASE("score-function estimator") {
  Rng rng = make_rng(3);
  PerturbedPrecoder pp{CVec::Random(4), CVec::Random(4), 0.1};
  CHECK(score_function_grad(0.0, pp, CMat::Random(4, 12)).norm() == 0.0);

  SUBCASE("unbiased on the affine toy problem") {
    const oracle::AffineToy toy = oracle::make_affine_toy(4, 6, 17);
    const double sigma = 0.5;
    const int n = 100000;
    const Precoder f{toy.f(), 0.0};
    RVec sum = RVec::Zero(6), sq = RVec::Zero(6);
    for (int i = 0; i < n; ++i) {
      const PerturbedPrecoder p = perturb(f, sigma, rng);
      const double loss = (p.weights - toy.c).squaredNorm();
      const RVec g = score_function_grad(loss, p, toy.A);
      sum += g;
      sq += g.cwiseAbs2();
    }
    const RVec exact = toy.exact_gradient();
    for (int c = 0; c < 6; ++c) {
      const double mean = sum[c] / n;
      const double se = std::sqrt((sq[c] / n - mean * mean) / n);
      CHECK(std::abs(mean - exact[c]) <= 3.0 * se);
    }
  }
  SUBCASE("variance follows the score scaling") {
    // constant loss: Var[l * score] = l^2 (2/sigma^2) ||J_c||^2, i.e. proportional to 1/sigma^2
    const CMat J = CMat::Random(4, 3);
    const Precoder f{CVec::Random(4), 0.0};
    auto variance = [&](double sigma) {
      const int n = 50000;
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double g = score_function_grad(2.0, perturb(f, sigma, rng), J)[0];
        s += g;
        s2 += g * g;
      }
      return s2 / n - (s / n) * (s / n);
    };
    const double v1 = variance(0.1), v2 = variance(0.2);
    CHECK(v1 / v2 == doctest::Approx(4.0).epsilon(0.05));
    CHECK(v1 == doctest::Approx(4.0 * 2.0 / 0.01 * J.col(0).squaredNorm()).epsilon(0.05));
  }
}

TEST_CASE("privileged channel") {
  Config cfg = load_preset("desk");
  cfg.train.batch = 4;
  cfg.train.iterations = 2;
  const Environment env = cfg.environment();
  const ArrayPair truth = draw_array_pair(16, 0.005, 5);

  const std::uint64_t before = PrivilegedChannel::call_count();
  train(cfg.train, env, truth, 9);
  CHECK(PrivilegedChannel::call_count() == before);

  cfg.train.mode = TrainMode::slcb;
  train(cfg.train, env, truth, 9);
  CHECK(PrivilegedChannel::call_count() > before);

  SUBCASE("repeated supervised gradients agree bitwise") {
    const PrivilegedChannel ch(truth, env.waveform);
    Rng rng = make_rng(4);
    const SampleContext ctx = draw_context(env, rng);
    const PrecoderInputs pin{ctx.sensing_sector, ctx.comm_sector, &env.precoder_grid, ctx.omega_r, 0.1, 0.005};
    const Precoder f = build_precoder(pin, LearnableParams::ideal(16, 0.005));
    Rng n1 = make_rng(5);
    const CommObservation o = comm_forward(ctx.comm, f.weights, ctx.symbols.symbols, truth.tx, env.waveform,
                                           env.noise_psd_comm, n1);
    const CVec g1 = ch.comm_cotangent(ctx.comm, o, ctx.symbols);
    const CVec g2 = ch.comm_cotangent(ctx.comm, o, ctx.symbols);
    CHECK(g1 == g2);
  }
}
