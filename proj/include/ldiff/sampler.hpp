#pragma once

#include "ldiff/dynamics.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ldiff {

/// Anything that can supply s_k at a batch of states. Columns of X (and P in
/// the underdamped case) are individual queries; the result is d x n.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual int dim() const = 0;
  virtual bool underdamped() const = 0;
  virtual Mat eval_batch(int k, const Mat& X, const Mat* P) const = 0;
};

/// s == 0, the exact score of the uniform law when f == 0.
class ZeroScore final : public ScoreModel {
 public:
  ZeroScore(int dim, bool underdamped) : dim_(dim), underdamped_(underdamped) {}
  int dim() const override { return dim_; }
  bool underdamped() const override { return underdamped_; }
  Mat eval_batch(int, const Mat& X, const Mat*) const override { return Mat::Zero(X.rows(), X.cols()); }

 private:
  int dim_;
  bool underdamped_;
};

using PriorSampler = std::function<Vec(Rng&)>;

struct SampleOptions {
  int threads = 1;
  /// Output filter (e.g. det X = +1 on SO(n)); rejected samples are counted, not returned.
  std::function<bool(const Vec&)> accept;
};

struct SampleResult {
  std::vector<Vec> samples;  // in chain order, failed/rejected chains omitted
  int projection_failures = 0;
  int nonfinite_failures = 0;
  int rejected = 0;
  long projection_retries = 0;

  int failures() const { return projection_failures + nonfinite_failures; }
};

/// Runs n backward chains x_N -> x_0 in lockstep. Chain i draws its prior
/// sample and all of its noise from derive_seed(seed, i).
SampleResult sample_backward(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                             const ScoreModel& model, const PriorSampler& prior, int n, std::uint64_t seed,
                             const SampleOptions& opts = {});

}  // namespace ldiff
