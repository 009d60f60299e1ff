#include "ldiff/dynamics.hpp"
#include "ldiff/random.hpp"
#include "ldiff/trajectory.hpp"
#include "ldiff/zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ldiff;

namespace {

Vec v3(double a, double b, double c) { return Vec{{a, b, c}}; }

SamplerConfig quiet(Mode m, double alpha = 50.0) {
  SamplerConfig c;
  c.mode = m;
  c.alpha = alpha;
  c.noise_scale = 0.0;
  return c;
}

/// Unit sphere with a constant external force, f(x) = w^T x.
ConstraintSet tilted_sphere(const Vec& w) {
  auto cs = make_sphere(3).cs;
  cs.grad_f = [w](const Vec&) { return w; };
  return cs;
}

}  // namespace

TEST(Schedule, Examples) {
  const NoiseSchedule volcano(0.1, 1.3, 2.0, 50);
  EXPECT_NEAR(volcano.sigma(25 * volcano.dt()), 0.7, 1e-14);
  EXPECT_NEAR(volcano.sigma_at(25), 0.7, 1e-14);
  EXPECT_DOUBLE_EQ(volcano.sigma_at(0), 0.1);
  EXPECT_DOUBLE_EQ(volcano.sigma_at(50), 1.3);

  const NoiseSchedule flat(1.0, 1.0, 3.0, 10);
  for (double t : {0.0, 0.5, 1.7, 3.0}) EXPECT_NEAR(flat.cumulative_S(t), t, 1e-14);

  EXPECT_NEAR(NoiseSchedule(0.0, 1.0, 1.0, 10).cumulative_S(1.0), 1.0 / 3.0, 1e-15);
}

TEST(Schedule, RangeChecksAndClamping) {
  const NoiseSchedule s(0.1, 1.3, 2.0, 50);
  EXPECT_THROW(s.sigma_at(-1), std::out_of_range);
  EXPECT_THROW(s.sigma_at(51), std::out_of_range);
  EXPECT_THROW(s.cumulative_S(2.5), std::out_of_range);
  EXPECT_DOUBLE_EQ(s.sigma_clamped(-1), s.sigma_at(0));
  EXPECT_DOUBLE_EQ(s.sigma_clamped(51), s.sigma_at(50));
  EXPECT_THROW(NoiseSchedule(1.0, 0.5, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(NoiseSchedule(0.1, 1.0, 0.0, 10), std::invalid_argument);
}

TEST(Schedule, CumulativeMatchesQuadratureAndInverts) {
  const NoiseSchedule s(0.1, 1.3, 2.0, 50);
  // Simpson's rule is exact for the quadratic integrand.
  for (double t : {0.3, 1.0, 1.9}) {
    const double mid = s.sigma(t / 2);
    const double simpson = t / 6 * (std::pow(s.sigma(0), 2) + 4 * mid * mid + std::pow(s.sigma(t), 2));
    EXPECT_NEAR(s.cumulative_S(t), simpson, 1e-13);
    EXPECT_NEAR(s.inverse_S(s.cumulative_S(t)), t, 1e-10);
  }
}

TEST(FrictionFactor, Examples) {
  EXPECT_NEAR(friction_factor(3.0, 1.0, 0.04), 0.88692, 1e-5);
  EXPECT_DOUBLE_EQ(friction_factor(0.0, 1.0, 0.04), 1.0);
  double prev = 1.0;
  for (double g : {0.5, 1.0, 10.0, 100.0, 1e4}) {
    const double a = friction_factor(g, 1.0, 0.04);
    EXPECT_LT(a, prev);
    prev = a;
  }
  EXPECT_LT(prev, 1e-100);
}

TEST(ModeNames, RoundTrip) {
  for (Mode m : {Mode::OLLA, Mode::OLLA_P, Mode::ULLA, Mode::ULLA_P}) EXPECT_EQ(mode_from_string(to_string(m)), m);
  EXPECT_EQ(mode_from_string("ULLA-P"), Mode::ULLA_P);
  EXPECT_THROW(mode_from_string("BAOAB"), std::invalid_argument);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.mode = Mode::ULLA_P;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ForwardOlla, OnManifoldWithoutNoiseIsFixed) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 100);
  const Vec x = v3(0, 0.6, 0.8);
  EXPECT_LT((forward_step_olla(cs, quiet(Mode::OLLA), s, 3, x, Vec::Zero(3)) - x).norm(), 1e-15);
}

TEST(ForwardOlla, LandingScalings) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 100);  // dt = 0.01
  const double L = 2.2 * 0.21 / 4.84;
  auto cfg = quiet(Mode::OLLA);
  cfg.olla_forward_landing = OllaForwardLanding::kEulerDisplay;
  const Vec a = forward_step_olla(cs, cfg, s, 0, v3(1.1, 0, 0), Vec::Zero(3));
  EXPECT_NEAR(a[0], 1.1 - 0.25 * L, 1e-14);
  EXPECT_NEAR(a[0], 1.1 - 0.02386, 1e-5);
  cfg.olla_forward_landing = OllaForwardLanding::kLemma;
  const Vec b = forward_step_olla(cs, cfg, s, 0, v3(1.1, 0, 0), Vec::Zero(3));
  EXPECT_NEAR(b[0], 1.1 - 0.5 * L, 1e-14);
}

TEST(ForwardOlla, NoiseIsTangential) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 100);
  auto cfg = quiet(Mode::OLLA);
  cfg.noise_scale = 1.0;
  const Vec out = forward_step_olla(cs, cfg, s, 0, v3(1, 0, 0), v3(5, 1, 0));
  EXPECT_NEAR(out[0], 1.0, 1e-15);
  EXPECT_NEAR(out[1], 0.1, 1e-15);
  EXPECT_EQ(out[2], 0.0);
}

TEST(ForwardOlla, NonFiniteInputThrows) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 10);
  EXPECT_THROW(forward_step_olla(cs, quiet(Mode::OLLA), s, 0, v3(NAN, 0, 1), Vec::Zero(3)), NonFiniteState);
}

TEST(BackwardOlla, ScoreCancellingForceIsFixed) {
  const Vec w = v3(0.3, -1.0, 2.0);
  const auto cs = tilted_sphere(w);
  const NoiseSchedule s(0.1, 1.3, 2, 50);
  const Vec x = v3(0.6, 0, 0.8);
  EXPECT_LT((backward_step_olla(cs, quiet(Mode::OLLA), s, 10, x, -w, Vec::Zero(3)) - x).norm(), 1e-15);
}

TEST(BackwardOlla, OffManifoldContracts) {
  // alpha sigma^2 dt stays below 2, where the discrete landing step is a contraction.
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(0.1, 0.5, 2, 50);
  Vec x = v3(0.9, 0.5, -0.4);
  for (int k1 = 50; k1 > 40; --k1) {
    const Vec next = backward_step_olla(cs, quiet(Mode::OLLA), s, k1, x, Vec::Zero(3), Vec::Zero(3));
    EXPECT_LT(std::abs(cs.h(next)[0]), std::abs(cs.h(x)[0]));
    x = next;
  }
}

TEST(PseudoMomentum, Examples) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 0.01, 1);  // sigma^2 dt = 0.01
  EXPECT_EQ(pseudo_momentum_fwd(cs, s, 1, v3(1, 0, 0), v3(1, 0, 0)).value.norm(), 0.0);
  const Vec xk = v3(1, 0.01, 0);
  const Vec p = pseudo_momentum_fwd(cs, s, 1, xk, v3(1, 0, 0)).value;
  const auto c = geometry_at(cs, xk);
  EXPECT_LT((p - c.proj * v3(0, 1, 0)).norm(), 1e-12);
  EXPECT_NEAR(p.norm(), 1.0, 1e-3);
}

TEST(PseudoMomentum, AlwaysTangent) {
  Rng rng(1);
  const auto task = make_son(3);
  const NoiseSchedule s(0.1, 1.3, 2, 50);
  for (int i = 0; i < 100; ++i) {
    const Vec a = sample_uniform(task, rng) + 0.1 * standard_normal(rng, 9);
    const Vec b = a + standard_normal(rng, 9);
    const auto c = geometry_at(task.cs, a);
    EXPECT_LE((c.gradJ * pseudo_momentum_fwd(c, s, 5, b).value).norm(), 1e-10);
    EXPECT_LE((c.gradJ * pseudo_momentum_bwd(c, s, 5, b).value).norm(), 1e-10);
  }
}

TEST(ForwardUlla, Examples) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 0.04, 1);
  const auto cfg = quiet(Mode::ULLA);
  const auto at = geometry_at(cs, v3(1, 0, 0));
  EXPECT_LT((forward_step_ulla(cs, cfg, s, 0, at, {Vec::Zero(3)}, Vec::Zero(3)) - v3(1, 0, 0)).norm(), 1e-15);
  const Vec out = forward_step_ulla(cs, cfg, s, 0, at, {v3(0, 1, 0)}, Vec::Zero(3));
  EXPECT_NEAR(out[0], 1.0, 1e-15);
  EXPECT_NEAR(out[1], 0.04 * std::exp(-0.12), 1e-15);
  EXPECT_NEAR(out[1], 0.035477, 1e-6);
}

TEST(ForwardUlla, TangentialNoiseVariance) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 0.04, 1);
  SamplerConfig cfg;
  cfg.mode = Mode::ULLA;
  const auto at = geometry_at(cs, v3(1, 0, 0));
  const double a = friction_factor(3.0, 1.0, 0.04);
  const double expected = 0.04 * 0.04 * (1 - a * a);
  Rng rng(99);
  const int n = 100000;
  double s1 = 0, s2 = 0, n0 = 0;
  for (int i = 0; i < n; ++i) {
    const Vec d = forward_step_ulla(cs, cfg, s, 0, at, {Vec::Zero(3)}, standard_normal(rng, 3)) - at.x;
    s1 += d[1] * d[1];
    s2 += d[2] * d[2];
    n0 = std::max(n0, std::abs(d[0]));
  }
  EXPECT_NEAR(s1 / n / expected, 1.0, 0.02);
  EXPECT_NEAR(s2 / n / expected, 1.0, 0.02);
  EXPECT_LT(n0, 1e-15);
}

TEST(BackwardUlla, BallisticReversal) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 0.04, 1);
  const auto cfg = quiet(Mode::ULLA);
  const Vec x = v3(0, 0.6, 0.8);
  const auto at = geometry_at(cs, x);
  const Vec p = v3(0.3, -0.2, 0.7);
  const double a = friction_factor(3.0, 1.0, 0.04);
  const Vec out = backward_step_ulla(cs, cfg, s, 1, at, {p}, Vec::Zero(3), Vec::Zero(3));
  EXPECT_LT((out - (x - 0.04 * a * at.proj * p)).norm(), 1e-15);
}

TEST(BackwardUlla, RoundTripIsSecondOrder) {
  // Deterministic chain on the sphere with a friction-compensating oracle
  // score s = -(1 - a^2) p / (sigma^2 dt); recover x_k from (x_{k+1}, x_{k+2}).
  const auto cs = make_sphere(3).cs;
  const auto cfg = quiet(Mode::ULLA);
  std::vector<double> err;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    const NoiseSchedule s(1, 1, 10 * dt, 10);
    const Vec x0 = v3(1, 0, 0);
    const Vec xm1 = x0 - dt * v3(0, 1, 0.5);
    const Vec x1 = forward_step_ulla(cs, cfg, s, 0, x0, xm1, Vec::Zero(3));
    const Vec x2 = forward_step_ulla(cs, cfg, s, 1, x1, x0, Vec::Zero(3));
    const auto at1 = geometry_at(cs, x1);
    const auto p = pseudo_momentum_bwd(at1, s, 1, x2);
    const double a = friction_factor(cfg.gamma, 1.0, dt);
    const Vec score = -(1 - a * a) / dt * p.value;
    err.push_back((backward_step_ulla(cs, cfg, s, 1, at1, p, score, Vec::Zero(3)) - x0).norm());
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    EXPECT_GT(std::log2(err[i] / err[i + 1]), 1.8) << err[i] << " vs " << err[i + 1];
  }
}

TEST(Ulla, CurvatureCorrectionIsAdditive) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(0.5, 0.5, 0.2, 10);
  auto off = quiet(Mode::ULLA);
  auto on = off;
  on.use_curvature = true;
  const auto at = geometry_at(cs, v3(1.05, 0.2, -0.1));
  const PseudoMomentum p{at.proj * v3(0.4, 1.0, -0.3)};
  const double s2dt = 0.25 * 0.02;
  const Vec lift = at.gradJ.transpose() * at.gram_pinv *
                   (curvature_H1(at, cs, p.value) - off.alpha * curvature_H2_collapsed(at, cs, p.value));
  const Vec diff = forward_step_ulla(cs, on, s, 2, at, p, Vec::Zero(3)) -
                   forward_step_ulla(cs, off, s, 2, at, p, Vec::Zero(3));
  EXPECT_LT((diff + s2dt * s2dt * lift).norm(), 1e-15);
  EXPECT_GT(diff.norm(), 0.0);
}

TEST(Projected, TangentialStepLandsOnSphere) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(0.1, 1.3, 2, 50);
  Rng rng(4);
  for (Mode m : {Mode::OLLA_P, Mode::ULLA_P}) {
    SamplerConfig cfg;
    cfg.mode = m;
    const Vec x = v3(0, 0.6, 0.8);
    const Vec prev = v3(0, 0.61, 0.79).normalized();
    const Vec out = forward_step_projected(cs, cfg, s, 10, x, prev, 0.1 * standard_normal(rng, 3));
    EXPECT_NEAR(out.norm(), 1.0, 1e-10);
    const Vec back = backward_step_projected(cs, cfg, s, 10, x, prev, Vec::Zero(3), 0.1 * standard_normal(rng, 3));
    EXPECT_NEAR(back.norm(), 1.0, 1e-10);
  }
}

TEST(Projected, HugeKickFails) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 50);
  SamplerConfig cfg;
  cfg.mode = Mode::OLLA_P;
  cfg.noise_scale = 100.0;
  try {
    forward_step_projected(cs, cfg, s, 7, v3(1, 0, 0), v3(1, 0, 0), v3(0, 1, 1));
    FAIL() << "expected ProjectionFailure";
  } catch (const ProjectionFailure& e) {
    EXPECT_EQ(e.step(), 7);
  }
}

TEST(Projected, LandingModeRejected) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 1, 50);
  EXPECT_THROW(forward_step_projected(cs, quiet(Mode::OLLA), s, 0, v3(1, 0, 0), v3(1, 0, 0), Vec::Zero(3)),
               std::invalid_argument);
}

TEST(DecayOracle, Examples) {
  const NoiseSchedule flat(1, 1, 1, 1000);
  auto sph = make_sphere(3).cs;
  const Vec x0 = v3(std::sqrt(1.2), 0, 0);
  EXPECT_NEAR(decay_oracle(sph, flat, 50, x0, 0.1).h_pred[0], 0.2 * std::exp(-5.0), 1e-15);
  EXPECT_NEAR(decay_oracle(sph, flat, 50, x0, 0.1).h_pred[0], 1.3475e-3, 1e-7);

  const auto disk = make_disk(2, 0.05).cs;
  const auto pred = decay_oracle(disk, flat, 50, Vec{{std::sqrt(2.0), 0}}, 0.01);
  EXPECT_NEAR(pred.tau[0], std::log(21.0) / 50, 1e-12);
  EXPECT_NEAR(pred.tau[0], 0.06089, 1e-5);
  EXPECT_NEAR(pred.g_pred[0], -0.05 + 1.05 * std::exp(-0.5), 1e-14);
  EXPECT_EQ(decay_oracle(disk, flat, 50, Vec{{std::sqrt(2.0), 0}}, 0.5).g_pred[0], 0.0);

  for (double t : {0.0, 0.3, 1.0}) EXPECT_EQ(decay_oracle(sph, flat, 50, v3(0, 1, 0), t).h_pred[0], 0.0);
}

TEST(SimulateForward, ZeroStepsReturnsStart) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(0.1, 1.3, 2, 0);
  Rng rng(0);
  const Vec x0 = v3(1.5, 0, 0);
  const auto tr = simulate_forward(cs, SamplerConfig{}, s, x0, rng);
  EXPECT_EQ(tr.N, 0);
  EXPECT_EQ(tr.terminal(), x0);
}

TEST(SimulateForward, TracksDecayOracle) {
  const auto cs = make_sphere(3).cs;
  const NoiseSchedule s(1, 1, 0.2, 200);
  auto cfg = quiet(Mode::OLLA);
  cfg.terminal_projection = false;
  Rng rng(0);
  const Vec x0 = v3(std::sqrt(1.2), 0, 0);
  const auto tr = simulate_forward(cs, cfg, s, x0, rng);
  // The discrete chain decays by (1 - alpha dt) per step exactly on the sphere
  // radial line, which stays within a few percent of the continuous rate early on.
  for (int k = 1; k <= 40; ++k) {
    const double pred = decay_oracle(cs, s, 50, x0, k * s.dt()).h_pred[0];
    EXPECT_NEAR(tr.h_inf[k] / pred, 1.0, 0.05) << "step " << k;
  }
}

TEST(SimulateForward, SeededRunsAreBitIdentical) {
  const auto task = make_sphere(3);
  const NoiseSchedule s(0.1, 1.3, 2, 50);
  for (Mode m : {Mode::OLLA, Mode::ULLA, Mode::OLLA_P, Mode::ULLA_P}) {
    SamplerConfig cfg;
    cfg.mode = m;
    Rng a(42), b(42);
    const Vec x0 = v3(0, 0, 1);
    EXPECT_EQ(simulate_forward(task.cs, cfg, s, x0, a).states, simulate_forward(task.cs, cfg, s, x0, b).states);
  }
}

TEST(SimulateForward, BatchIndependentOfThreads) {
  const auto task = make_sphere(3);
  const NoiseSchedule s(0.1, 1.3, 2, 30);
  Rng rng(3);
  const auto x0 = prior_uniform(task, rng, 12);
  SamplerConfig cfg;
  const auto one = simulate_forward_batch(task.cs, cfg, s, x0, 5, 1);
  const auto four = simulate_forward_batch(task.cs, cfg, s, x0, 5, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].states, four[i].states);
}

TEST(SimulateForward, UllaStoresPositionsOnly) {
  const auto task = make_son(3);
  const NoiseSchedule s(0.1, 1.3, 2, 50);
  SamplerConfig cfg;
  Rng rng(1);
  const auto tr = simulate_forward(task.cs, cfg, s, sample_uniform(task, rng), rng);
  EXPECT_EQ(tr.storage_scalars(), static_cast<std::size_t>(51 * 9));
  EXPECT_LE(h_inf_norm(task.cs, tr.terminal()), cfg.newton.tol);
}

TEST(SimulateForward, CurvatureNeedsHessians) {
  auto cs = make_sphere(3).cs;
  cs.hess_h = nullptr;
  SamplerConfig cfg;
  cfg.use_curvature = true;
  Rng rng(0);
  EXPECT_THROW(simulate_forward(cs, cfg, NoiseSchedule(0.1, 1.3, 2, 5), v3(1, 0, 0), rng), MissingHessian);
}
