#include "ldiff/metrics.hpp"
#include "ldiff/random.hpp"
#include "ldiff/zoo.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace ldiff;

namespace {

double brute_js(const std::vector<double>& p, const std::vector<double>& q) {
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = (p[i] + q[i]) / 2;
    if (p[i] > 0) js += p[i] / 2 * std::log(p[i] / m) / std::log(2.0);
    if (q[i] > 0) js += q[i] / 2 * std::log(q[i] / m) / std::log(2.0);
  }
  return std::sqrt(js);
}

Vec rotation2(double t) {
  return Vec{{std::cos(t), std::sin(t), -std::sin(t), std::cos(t)}};
}

}  // namespace

TEST(Jsd, Examples) {
  EXPECT_EQ(jsd({1, 2, 3}, {2, 4, 6}), 0.0);
  EXPECT_NEAR(jsd({1, 0, 0}, {0, 0, 5}), 1.0, 1e-15);
  EXPECT_NEAR(jsd({0.5, 0.5}, {1, 0}), brute_js({0.5, 0.5}, {1, 0}), 1e-15);
  EXPECT_NEAR(jsd({0.5, 0.5}, {1, 0}), 0.5579, 1e-4);
}

TEST(Jsd, MetricProperties) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6), b(6), c(6);
    for (int j = 0; j < 6; ++j) a[j] = u(rng), b[j] = u(rng), c[j] = u(rng);
    const double ab = jsd(a, b);
    EXPECT_NEAR(ab, jsd(b, a), 1e-15);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_LE(ab, jsd(a, c) + jsd(c, b) + 1e-12);
  }
}

TEST(Jsd, InputValidation) {
  EXPECT_THROW(jsd({1, 2}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(jsd({0, 0}, {1, 2}), std::invalid_argument);
  EXPECT_THROW(jsd({-1, 2}, {1, 2}), std::invalid_argument);
  const auto a = histogram_1d({0.1, 0.2}, 4, 0, 1);
  const auto b = histogram_1d({0.1, 0.2}, 4, 0, 2);
  EXPECT_THROW(jsd_histograms(a, b), std::invalid_argument);
  EXPECT_EQ(jsd_histograms(a, a), 0.0);
}

TEST(Histograms, SphericalBinning) {
  const auto h = spherical_histogram({Vec{{0, 0, 1}}, Vec{{0, 0, -2}}, Vec{{1, 0, 0}}, Vec{{0, -1, 0}}}, 4, 8);
  EXPECT_EQ(h.spec.total_bins(), 32u);
  EXPECT_EQ(h.counts[0 * 8 + 0], 1.0);                 // north pole
  EXPECT_EQ(h.counts[3 * 8 + 0], 1.0);                 // south pole
  EXPECT_EQ(h.counts[2 * 8 + 0], 1.0);                 // equator, phi = 0
  EXPECT_EQ(h.counts[2 * 8 + 6], 1.0);                 // equator, phi = 3 pi / 2
  EXPECT_THROW(spherical_histogram({Vec::Zero(2)}), DimensionMismatch);
}

TEST(Histograms, OneDimensionalClampsOutliers) {
  const auto h = histogram_1d({-5, 0.1, 0.6, 9}, 2, 0, 1);
  EXPECT_EQ(h.counts, (std::vector<double>{2, 2}));
  EXPECT_THROW(histogram_1d({0.0}, 1, 0, 1), std::invalid_argument);
  EXPECT_THROW(histogram_1d({0.0}, 3, 1, 1), std::invalid_argument);
}

TEST(ViolationStats, Examples) {
  const auto sph = make_sphere(3).cs;
  EXPECT_EQ(violation_stats(sph, {Vec{{0, 1, 0}}, Vec{{0, 0, -1}}}).avg_abs_h, 0.0);
  EXPECT_NEAR(violation_stats(sph, {Vec{{1.1, 0, 0}}}).avg_abs_h, 0.21, 1e-14);
  const auto disk = make_disk(2).cs;
  EXPECT_EQ(violation_stats(disk, {Vec{{0.1, 0.2}}, Vec{{-0.5, 0.5}}}).avg_g_plus, 0.0);
  EXPECT_NEAR(violation_stats(disk, {Vec{{1.2, 0}}, Vec{{0, 0}}}).avg_g_plus, 0.22, 1e-14);
}

TEST(PowerTraces, IdentityAndPlanarRotation) {
  const Vec I = vec(Mat::Identity(3, 3));
  for (int k : {1, 2, 4, 5}) {
    const auto hs = power_trace_stats({I, I, I}, 3, {k});
    ASSERT_EQ(hs.size(), 1u);
    EXPECT_LE(hs[0].spec.lo[0], 3.0);
    EXPECT_GE(hs[0].spec.hi[0], 3.0);
    double total = 0;
    for (double c : hs[0].counts) total += c;
    EXPECT_EQ(total, 3.0);
    EXPECT_EQ(*std::max_element(hs[0].counts.begin(), hs[0].counts.end()), 3.0);
  }
  for (double t : {0.3, 1.1, 2.5}) {
    for (int k : {1, 2, 4, 5}) EXPECT_NEAR(power_traces({rotation2(t)}, 2, k)[0], 2 * std::cos(k * t), 1e-12);
  }
}

TEST(PowerTraces, HaarMeanTraceVanishes) {
  Rng rng(2);
  const auto xs = prior_uniform(make_son(3), rng, 10000);
  double m = 0;
  for (double t : power_traces(xs, 3, 1)) m += t / xs.size();
  // tr R = 1 + 2 cos(angle) has mean 0 under Haar measure.
  EXPECT_NEAR(m, 0.0, 0.05);
}

TEST(PowerTraces, JsdSharedRange) {
  Rng rng(3);
  const auto task = make_son(3);
  const auto a = prior_uniform(task, rng, 4000);
  const auto b = prior_uniform(task, rng, 4000);
  EXPECT_LT(power_trace_jsd(a, b, 3, 1, 32), 0.1);
  const std::vector<Vec> ids(100, vec(Mat::Identity(3, 3)));
  EXPECT_GT(power_trace_jsd(a, ids, 3, 1, 32), 0.8);
}
