#pragma once

#include "ldiff/score.hpp"
#include "ldiff/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ldiff {

/// One residual term: the transition x_{k+1} -> x_k of trajectory `traj`,
/// scaled by `mult` (inverse inclusion probability).
struct LossTerm {
  int traj = 0;
  int k = 0;
  double mult = 1.0;
};

/// Every k in [0, N) of every trajectory.
std::vector<LossTerm> full_sum_terms(int n_traj, int N);
/// `per_traj` uniform draws of k per trajectory, each weighted N / per_traj.
std::vector<LossTerm> subsampled_terms(int n_traj, int N, int per_traj, Rng& rng);

struct LossResult {
  double loss = 0.0;            // (1 / n_traj) sum_terms mult * weight * ||residual||^2
  Vec grad;                     // d loss / d theta
  std::vector<double> per_k;    // mean unscaled term value at each k (0 where no term)
  std::vector<int> per_k_count;
};

/// Overdamped CWPM: weight 1 / (2 sigma_{k+1}^2 dt), residual
/// Pi(x_{k+1}) (x_k - x_{k+1} - sigma_{k+1}^2 dt / 2 Pi (grad f + s_{k+1}(x_{k+1}))).
LossResult cwpm_loss_over(const ConstraintSet& cs, const NoiseSchedule& sched, const ScoreNet& net,
                          const std::vector<Trajectory>& batch, const std::vector<LossTerm>& terms,
                          bool with_grad = true);

/// Underdamped CWPM: weight 1 / (2 sigma^4 dt^2 (1 - a^2)) at k+1, residual
/// Pi(x_{k+1}) (x_k - x_{k+1} + a sigma^2 dt Pi p~bwd + sigma^4 dt^2 Pi (grad f + s)).
/// The last transition uses x_{N+1} := p_N, i.e. p~bwd_N = Pi(x_N) p_N.
LossResult cwpm_loss_under(const ConstraintSet& cs, const NoiseSchedule& sched, double gamma, const ScoreNet& net,
                           const std::vector<Trajectory>& batch, const std::vector<Vec>& terminal_momenta,
                           const std::vector<LossTerm>& terms, bool with_grad = true);

/// Score values at a batch of queries; columns of X (and P~) are the queries,
/// steps[i] is the step index of column i. Returns d x n.
using BatchScore = std::function<Mat(const std::vector<int>& steps, const Mat& X, const Mat* P)>;

/// Loss value only, for an arbitrary score function (grad is left empty).
LossResult cwpm_loss_over(const ConstraintSet& cs, const NoiseSchedule& sched, const BatchScore& score,
                          const std::vector<Trajectory>& batch, const std::vector<LossTerm>& terms);
LossResult cwpm_loss_under(const ConstraintSet& cs, const NoiseSchedule& sched, double gamma, const BatchScore& score,
                           const std::vector<Trajectory>& batch, const std::vector<Vec>& terminal_momenta,
                           const std::vector<LossTerm>& terms);

// ---------------------------------------------------------------------------

enum class OptimizerKind { Adam, SGD };
enum class LrSchedule { Constant, Cosine };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  Vec m, v;
  long t = 0;
};

/// Adam with bias correction, or theta -= lr * grad for SGD.
void optimizer_step(OptimizerState& state, Vec& theta, const Vec& grad, double lr);

struct TrainConfig {
  int epochs = 100;
  int batch = 128;
  double lr = 1e-3;
  /// Cosine decays lr to lr_min over the run.
  LrSchedule lr_schedule = LrSchedule::Constant;
  double lr_min = 0.0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  int l_f = 1;
  /// 0 means the exact sum over all N steps.
  int steps_per_traj = 0;
  /// Exponential moving average of the parameters, copied into the network
  /// when training ends. 0 disables it.
  double ema_decay = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;  // throws std::invalid_argument
  double lr_at(int epoch) const;
};

struct LossReport {
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> per_k;
  double grad_norm = 0.0;
  double lr = 0.0;
  int cache_age = 0;
  std::uint64_t cache_id = 0;
};

/// Minimises the CWPM loss matching cfg.mode, one optimizer step per epoch. The
/// forward batch is regenerated from resampled dataset points whenever
/// epoch % l_f == 0. On a non-finite loss the last good parameters are restored
/// and NumericalFailure is thrown. `net` sees the raw parameters during
/// training (and in on_epoch); with ema_decay > 0 it ends with the average.
std::vector<LossReport> train(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                              const TrainConfig& tcfg, const std::vector<Vec>& dataset, ScoreNet& net,
                              const std::function<void(const LossReport&)>& on_epoch = {});

}  // namespace ldiff
