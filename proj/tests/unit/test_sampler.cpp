#include "ldiff/metrics.hpp"
#include "ldiff/random.hpp"
#include "ldiff/sampler.hpp"
#include "ldiff/trajectory.hpp"
#include "ldiff/zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace ldiff;

namespace {

/// Exact cell probabilities of the uniform law on S^2 for spherical_histogram.
std::vector<double> uniform_cells(int n_theta, int n_phi) {
  std::vector<double> p;
  for (int i = 0; i < n_theta; ++i) {
    const double a = std::numbers::pi * i / n_theta, b = std::numbers::pi * (i + 1) / n_theta;
    for (int j = 0; j < n_phi; ++j) p.push_back((std::cos(a) - std::cos(b)) / 2 / n_phi);
  }
  return p;
}

PriorSampler uniform_prior(const TaskSpec& task) {
  return [task](Rng& rng) { return sample_uniform(task, rng); };
}

}  // namespace

TEST(TrajectoryDump, BinaryRoundTrip) {
  const auto task = make_sphere(3);
  SamplerConfig cfg;
  Rng rng(1);
  const auto tr = simulate_forward(task.cs, cfg, NoiseSchedule(0.1, 1.3, 2, 10), Vec{{0, 0, 1}}, rng);
  std::stringstream ss;
  write_trajectory_binary(ss, tr);
  EXPECT_EQ(ss.str().size(), 32u + 11 * 3 * 8);
  EXPECT_EQ(ss.str().substr(0, 8), "LDTRAJ01");
  const auto back = read_trajectory_binary(ss);
  EXPECT_EQ(back.dim, 3);
  EXPECT_EQ(back.N, 10);
  EXPECT_EQ(back.mode, Mode::ULLA);
  EXPECT_EQ(back.states, tr.states);

  std::stringstream bad("LDTRAJ02xxxxxxxxxxxxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(read_trajectory_binary(bad), Error);
}

TEST(TrajectoryDump, CsvColumns) {
  const auto task = make_sphere(3);
  SamplerConfig cfg;
  cfg.mode = Mode::OLLA;
  Rng rng(2);
  const auto tr = simulate_forward(task.cs, cfg, NoiseSchedule(0.1, 1.3, 2, 4), Vec{{0, 0, 1.1}}, rng);
  std::stringstream ss;
  write_trajectory_csv(ss, task.cs, tr);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "step,x0,x1,x2,h_inf,g_plus_max");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 5);
  ASSERT_EQ(tr.h_inf.size(), 5u);
  EXPECT_NEAR(tr.h_inf[0], 0.21, 1e-14);
}

TEST(SampleBackward, ZeroSamples) {
  const auto task = make_sphere(3);
  const auto r = sample_backward(task.cs, SamplerConfig{}, NoiseSchedule(0.1, 1.3, 2, 10), ZeroScore(3, true),
                                 uniform_prior(task), 0, 1);
  EXPECT_TRUE(r.samples.empty());
  EXPECT_EQ(r.failures(), 0);
}

TEST(SampleBackward, ZeroScoreKeepsUniformLaw) {
  const auto task = make_sphere(3);
  SamplerConfig cfg;
  cfg.mode = Mode::OLLA;
  SampleOptions opt;
  opt.threads = 4;
  const NoiseSchedule s(0.1, 0.6, 2, 50);
  const auto r = sample_backward(task.cs, cfg, s, ZeroScore(3, false), uniform_prior(task), 10000, 3, opt);
  ASSERT_EQ(r.samples.size(), 10000u);
  const auto h = spherical_histogram(r.samples, 4, 8);
  EXPECT_LT(jsd(h.counts, uniform_cells(4, 8)), 0.05);
  EXPECT_LE(violation_stats(task.cs, r.samples).avg_abs_h, 1e-8);
}

TEST(SampleBackward, TerminalProjectionOnSphere) {
  const auto task = make_sphere(3);
  SamplerConfig cfg;
  const auto r = sample_backward(task.cs, cfg, NoiseSchedule(0.1, 1.3, 2, 50), ZeroScore(3, true),
                                 uniform_prior(task), 500, 4);
  EXPECT_EQ(r.failures(), 0);
  EXPECT_LE(violation_stats(task.cs, r.samples).avg_abs_h, 1e-8);
}

TEST(SampleBackward, IndependentOfThreadCount) {
  const auto task = make_son(3);
  SamplerConfig cfg;
  const NoiseSchedule s(0.1, 1.3, 2, 20);
  SampleOptions one, many;
  many.threads = 3;
  const auto a = sample_backward(task.cs, cfg, s, ZeroScore(9, true), uniform_prior(task), 30, 9, one);
  const auto b = sample_backward(task.cs, cfg, s, ZeroScore(9, true), uniform_prior(task), 30, 9, many);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i], b.samples[i]);
}

TEST(SampleBackward, AcceptFilterCountsRejections) {
  const auto task = make_sphere(3);
  SampleOptions opt;
  opt.accept = [](const Vec& x) { return x[2] > 0; };
  const auto r = sample_backward(task.cs, SamplerConfig{}, NoiseSchedule(0.1, 1.3, 2, 10), ZeroScore(3, true),
                                 uniform_prior(task), 400, 5, opt);
  EXPECT_EQ(static_cast<int>(r.samples.size()) + r.rejected, 400);
  EXPECT_GT(r.rejected, 100);
  for (const auto& x : r.samples) EXPECT_GT(x[2], 0);
}

TEST(SampleBackward, ProjectionFailuresAreCounted) {
  const auto task = make_sphere(3);
  SamplerConfig cfg;
  cfg.mode = Mode::OLLA_P;
  cfg.noise_scale = 50.0;
  cfg.projection_retries = 0;
  const auto r = sample_backward(task.cs, cfg, NoiseSchedule(0.1, 1.3, 2, 10), ZeroScore(3, false),
                                 uniform_prior(task), 50, 6);
  EXPECT_GT(r.projection_failures, 0);
  EXPECT_EQ(static_cast<int>(r.samples.size()) + r.failures(), 50);
}

TEST(SampleBackward, RegimeMismatchRejected) {
  const auto task = make_sphere(3);
  EXPECT_THROW(sample_backward(task.cs, SamplerConfig{}, NoiseSchedule(0.1, 1.3, 2, 10), ZeroScore(3, false),
                               uniform_prior(task), 5, 1),
               DimensionMismatch);
}
