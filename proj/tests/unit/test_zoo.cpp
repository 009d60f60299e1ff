#include "ldiff/metrics.hpp"
#include "ldiff/random.hpp"
#include "ldiff/zoo.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ldiff;

TEST(Zoo, ConstraintCounts) {
  EXPECT_EQ(make_son(10).cs.num_eq, 55);
  EXPECT_EQ(make_son(10).cs.dim, 100);
  EXPECT_EQ(make_son(3).cs.num_eq, 6);
  EXPECT_EQ(make_sphere(4).cs.num_eq, 1);
  EXPECT_EQ(make_disk(2).cs.num_ineq, 1);
  const auto cap = make_sphere_cap(0.5);
  EXPECT_EQ(cap.cs.num_eq, 1);
  EXPECT_EQ(cap.cs.num_ineq, 1);
}

TEST(Zoo, SphereCapFeasibility) {
  const auto cap = make_sphere_cap(0.5);
  EXPECT_DOUBLE_EQ(cap.cs.g(Vec{{0, 0, 1}})[0], 0.5);
  EXPECT_LE(cap.cs.g(Vec{{1, 0, 0}})[0], 0.0);
  EXPECT_EQ(cap.cs.h(Vec{{1, 0, 0}})[0], 0.0);
}

TEST(Zoo, SonConstraintsVanishOnRotations) {
  const auto task = make_son(4);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_LT(task.cs.h(sample_uniform(task, rng)).norm(), 1e-12);
  const Mat X = Mat::Random(4, 4);
  const Mat E = X.transpose() * X - Mat::Identity(4, 4);
  const Vec h = task.cs.h(vec(X));
  int r = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) EXPECT_NEAR(h[r++], E(i, j), 1e-14);
  EXPECT_EQ(unvec(vec(X), 4), X);
}

TEST(PriorUniform, SphereSamples) {
  const auto task = make_sphere(3);
  Rng rng(2);
  const auto xs = prior_uniform(task, rng, 10000);
  Vec mean = Vec::Zero(3);
  for (const auto& x : xs) {
    EXPECT_NEAR(x.norm(), 1.0, 1e-12);
    mean += x / xs.size();
  }
  EXPECT_LT(mean.norm(), 0.02);
}

TEST(PriorUniform, RotationSamples) {
  const auto task = make_son(3);
  Rng rng(3);
  for (const auto& x : prior_uniform(task, rng, 500)) {
    const Mat X = unvec(x, 3);
    EXPECT_LT((X.transpose() * X - Mat::Identity(3, 3)).norm(), 1e-12);
    EXPECT_NEAR(X.determinant(), 1.0, 1e-12);
    EXPECT_TRUE(task.accept(x));
  }
}

TEST(PriorUniform, CapAndDiskSamplesAreFeasible) {
  Rng rng(4);
  for (const auto& task : {make_sphere_cap(0.5), make_sphere_cap(-0.3), make_disk(3)}) {
    for (const auto& x : prior_uniform(task, rng, 2000)) EXPECT_LE(task.cs.g(x)[0], 0.0);
  }
}

TEST(PriorUniform, DiskRadiusLaw) {
  const auto task = make_disk(2);
  Rng rng(5);
  int inner = 0;
  const int n = 20000;
  for (const auto& x : prior_uniform(task, rng, n)) inner += x.norm() < 0.5;
  EXPECT_NEAR(inner / double(n), 0.25, 0.01);
}

TEST(PriorMomentum, TangentWithProjectorCovariance) {
  const auto task = make_sphere(3);
  Rng rng(6);
  const Vec x{{1, 0, 0}};
  const auto c = geometry_at(task.cs, x);
  Mat cov = Mat::Zero(3, 3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vec p = prior_momentum(task.cs, x, rng);
    EXPECT_LE(std::abs(p[0]), 1e-12);
    cov += p * p.transpose() / n;
  }
  EXPECT_LT((cov - c.proj).norm() / c.proj.norm(), 0.02);

  const auto so = make_son(3);
  const Vec r = sample_uniform(so, rng);
  const auto cr = geometry_at(so.cs, r);
  for (int i = 0; i < 50; ++i) EXPECT_LE((cr.gradJ * prior_momentum(so.cs, r, rng)).norm(), 1e-10);
}

TEST(EmpiricalPrior, PoolBehaviour) {
  const auto task = make_sphere(3);
  const NoiseSchedule s(0.1, 1.3, 2, 20);
  Rng rng(7);
  const auto data = prior_uniform(task, rng, 50);
  SamplerConfig cfg;

  const auto one = prior_empirical_terminal(task.cs, cfg, s, data, 1, 1);
  Rng r(0);
  const Vec first = one(r);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(one(r), first);

  const auto a = prior_empirical_terminal(task.cs, cfg, s, data, 1, 40, 2);
  const auto b = prior_empirical_terminal(task.cs, cfg, s, data, 2, 40, 2);
  for (const auto& x : a.pool()) EXPECT_LE(h_inf_norm(task.cs, x), cfg.newton.tol);
  EXPECT_NE(a.pool()[0], b.pool()[0]);
  EXPECT_THROW(EmpiricalPrior({}), std::invalid_argument);
}

TEST(Vmf, ConcentratedModeCollapses) {
  Rng rng(8);
  const Vec mu = Vec{{1, 2, 2}} / 3.0;
  double worst = 0;
  for (const auto& x : dataset_vmf_mixture({{mu, 1e6}}, {1.0}, 1000, rng)) {
    EXPECT_NEAR(x.norm(), 1.0, 1e-10);
    worst = std::max(worst, (x - mu).norm());
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Vmf, ZeroConcentrationIsUniform) {
  Rng rng(9);
  const auto vmf = dataset_vmf_mixture({{Vec{{0, 0, 1}}, 0.0}}, {1.0}, 10000, rng);
  const auto uni = prior_uniform(make_sphere(3), rng, 10000);
  // 4 x 8 bins keep the finite-sample floor well below the tolerance.
  EXPECT_LT(jsd_histograms(spherical_histogram(vmf, 4, 8), spherical_histogram(uni, 4, 8)), 0.05);
}

TEST(Vmf, MeanResultantLength) {
  // E[mu . x] = coth(kappa) - 1 / kappa on S^2.
  Rng rng(10);
  const double kappa = 5.0;
  const Vec mu{{0, 1, 0}};
  double m = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) m += sample_vmf(mu, kappa, rng).dot(mu) / n;
  EXPECT_NEAR(m, 1.0 / std::tanh(kappa) - 1.0 / kappa, 0.005);

  // Higher dimension through Wood's general branch: samples stay on the sphere.
  const Vec mu5 = Vec::Unit(5, 2);
  for (int i = 0; i < 200; ++i) EXPECT_NEAR(sample_vmf(mu5, 10.0, rng).norm(), 1.0, 1e-12);
}

TEST(Vmf, WeightsValidated) {
  Rng rng(11);
  EXPECT_THROW(dataset_vmf_mixture({{Vec{{0, 0, 1}}, 1.0}}, {0.5, 0.5}, 10, rng), std::invalid_argument);
  EXPECT_THROW(dataset_vmf_mixture({{Vec{{0, 0, 1}}, 1.0}}, {-1.0}, 10, rng), std::invalid_argument);
}

TEST(SonMixture, SamplesAreRotationsNearCentres) {
  Rng rng(12);
  const auto mix = dataset_son_mixture(3, 2, 50.0, 400, rng);
  ASSERT_EQ(mix.centers.size(), 2u);
  for (const auto& x : mix.samples) {
    const Mat X = unvec(x, 3);
    EXPECT_LT((X.transpose() * X - Mat::Identity(3, 3)).norm(), 1e-10);
    EXPECT_NEAR(X.determinant(), 1.0, 1e-10);
    double d = 1e9;
    for (const auto& C : mix.centers) d = std::min(d, (X - C).norm());
    EXPECT_LT(d, 1.0);
  }
}

TEST(NearestRotation, FixesDeterminant) {
  Mat A = Mat::Identity(3, 3);
  A(2, 2) = -1;
  const Mat R = nearest_rotation(A);
  EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
  Rng rng(13);
  const Mat Q = unvec(sample_uniform(make_son(3), rng), 3);
  EXPECT_LT((nearest_rotation(Q) - Q).norm(), 1e-12);
}

TEST(SamplesCsv, RoundTripIsExact) {
  Rng rng(14);
  std::vector<Vec> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(standard_normal(rng, 4) * 1e-3);
  std::stringstream ss;
  write_samples_csv(ss, xs, 4);
  EXPECT_EQ(ss.str().substr(0, 12), "x0,x1,x2,x3\n");
  const auto back = read_samples_csv(ss);
  ASSERT_EQ(back.size(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(back[i], xs[i]);
}
