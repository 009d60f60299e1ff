#include "ldiff/training.hpp"

#include "ldiff/parallel.hpp"
#include "ldiff/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ldiff {

std::vector<LossTerm> full_sum_terms(int n_traj, int N) {
  std::vector<LossTerm> terms;
  terms.reserve(static_cast<std::size_t>(n_traj) * N);
  for (int i = 0; i < n_traj; ++i)
    for (int k = 0; k < N; ++k) terms.push_back({i, k, 1.0});
  return terms;
}

std::vector<LossTerm> subsampled_terms(int n_traj, int N, int per_traj, Rng& rng) {
  if (per_traj < 1) throw std::invalid_argument("subsampled_terms: per_traj must be >= 1");
  std::vector<LossTerm> terms;
  if (N < 1) return terms;
  std::uniform_int_distribution<int> pick(0, N - 1);
  const double mult = static_cast<double>(N) / per_traj;
  for (int i = 0; i < n_traj; ++i)
    for (int j = 0; j < per_traj; ++j) terms.push_back({i, pick(rng), mult});
  return terms;
}

namespace {

// r = base + coef * Pi s, term = w ||r||^2.
struct Prepared {
  Mat X, P, base;
  std::vector<Mat> proj;
  std::vector<int> steps;
  Vec coef, weight, mult;
};

LossResult finish(const Prepared& pr, const Mat& S, int n_traj, int N, Mat* upstream_out) {
  const Eigen::Index T = pr.X.cols();
  LossResult out;
  out.per_k.assign(N, 0.0);
  out.per_k_count.assign(N, 0);
  Mat upstream(pr.X.rows(), T);
  const double inv_b = n_traj > 0 ? 1.0 / n_traj : 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vec r = pr.base.col(t) + pr.coef[t] * (pr.proj[t] * S.col(t));
    const double term = pr.weight[t] * r.squaredNorm();
    out.loss += pr.mult[t] * term * inv_b;
    const int k = pr.steps[t] - 1;
    out.per_k[k] += term;
    ++out.per_k_count[k];
    upstream.col(t) = (2.0 * pr.weight[t] * pr.coef[t] * pr.mult[t] * inv_b) * r;
  }
  for (int k = 0; k < N; ++k)
    if (out.per_k_count[k] > 0) out.per_k[k] /= out.per_k_count[k];
  if (upstream_out) *upstream_out = std::move(upstream);
  return out;
}

LossResult finish(const ScoreNet& net, const Prepared& pr, int n_traj, int N, bool with_grad) {
  const bool under = net.underdamped();
  const Mat* P = under ? &pr.P : nullptr;
  Mat upstream;
  LossResult out = finish(pr, net.eval_batch(pr.steps, pr.X, P), n_traj, N, with_grad ? &upstream : nullptr);
  if (with_grad) out.grad = net.grad_params(pr.steps, pr.X, P, upstream);
  return out;
}

LossResult finish(const BatchScore& score, const Prepared& pr, bool under, int n_traj, int N) {
  const Mat S = score(pr.steps, pr.X, under ? &pr.P : nullptr);
  if (S.rows() != pr.X.rows() || S.cols() != pr.X.cols()) throw DimensionMismatch("cwpm: score has wrong shape");
  return finish(pr, S, n_traj, N, nullptr);
}

void check_batch(const ConstraintSet& cs, const NoiseSchedule& sched, const std::vector<Trajectory>& batch,
                 const std::vector<LossTerm>& terms) {
  for (const auto& tr : batch) {
    if (tr.dim != cs.dim) throw DimensionMismatch("cwpm: trajectory dimension differs from constraint set");
    if (tr.N != sched.N()) throw DimensionMismatch("cwpm: trajectory length differs from schedule");
  }
  for (const auto& t : terms) {
    if (t.traj < 0 || t.traj >= static_cast<int>(batch.size()) || t.k < 0 || t.k >= sched.N())
      throw std::out_of_range("cwpm: loss term outside the batch");
  }
}


Prepared prepare_over(const ConstraintSet& cs, const NoiseSchedule& sched, const std::vector<Trajectory>& batch,
                      const std::vector<LossTerm>& terms) {
  for (const auto& tr : batch)
    if (is_underdamped(tr.mode)) throw std::invalid_argument("cwpm_loss_over: trajectories come from an underdamped kernel");
  check_batch(cs, sched, batch, terms);

  const Eigen::Index T = terms.size();
  const int d = cs.dim;
  Prepared pr;
  pr.X.resize(d, T);
  pr.base.resize(d, T);
  pr.proj.resize(T);
  pr.steps.resize(T);
  pr.coef.resize(T);
  pr.weight.resize(T);
  pr.mult.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& term = terms[t];
    const Trajectory& tr = batch[term.traj];
    const Vec x1 = tr.state(term.k + 1);
    const Vec x0 = tr.state(term.k);
    const auto at = geometry_at(cs, x1);
    const double s2dt = std::pow(sched.sigma_at(term.k + 1), 2) * sched.dt();
    const double c = 0.5 * s2dt;
    pr.X.col(t) = x1;
    pr.proj[t] = at.proj;
    pr.base.col(t) = at.proj * ((x0 - x1) - c * (at.proj * cs.eval_grad_f(x1)));
    pr.coef[t] = -c;
    pr.weight[t] = 1.0 / (2.0 * s2dt);
    pr.mult[t] = term.mult;
    pr.steps[t] = term.k + 1;
  }
  return pr;
}

Prepared prepare_under(const ConstraintSet& cs, const NoiseSchedule& sched, double gamma,
                       const std::vector<Trajectory>& batch, const std::vector<Vec>& terminal_momenta,
                       const std::vector<LossTerm>& terms) {
  for (const auto& tr : batch)
    if (!is_underdamped(tr.mode)) throw std::invalid_argument("cwpm_loss_under: trajectories come from an overdamped kernel");
  if (terminal_momenta.size() != batch.size()) throw std::invalid_argument("cwpm_loss_under: one terminal momentum per trajectory required");
  check_batch(cs, sched, batch, terms);

  const int N = sched.N();
  const Eigen::Index T = terms.size();
  const int d = cs.dim;
  Prepared pr;
  pr.X.resize(d, T);
  pr.P.resize(d, T);
  pr.base.resize(d, T);
  pr.proj.resize(T);
  pr.steps.resize(T);
  pr.coef.resize(T);
  pr.weight.resize(T);
  pr.mult.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& term = terms[t];
    const Trajectory& tr = batch[term.traj];
    const int k1 = term.k + 1;
    const Vec x1 = tr.state(k1);
    const Vec x0 = tr.state(term.k);
    const auto at = geometry_at(cs, x1);
    const Vec p = k1 == N ? Vec(at.proj * terminal_momenta[term.traj])
                          : pseudo_momentum_bwd(at, sched, k1, tr.state(k1 + 1)).value;
    const double sigma = sched.sigma_at(k1);
    const double s2dt = sigma * sigma * sched.dt();
    const double a = friction_factor(gamma, sigma, sched.dt());
    const double e = s2dt * s2dt;
    pr.X.col(t) = x1;
    pr.P.col(t) = p;
    pr.proj[t] = at.proj;
    pr.base.col(t) = at.proj * ((x0 - x1) + a * s2dt * (at.proj * p) + e * (at.proj * cs.eval_grad_f(x1)));
    pr.coef[t] = e;
    pr.weight[t] = 1.0 / (2.0 * e * (1.0 - a * a));
    pr.mult[t] = term.mult;
    pr.steps[t] = k1;
  }
  return pr;
}

}  // namespace

LossResult cwpm_loss_over(const ConstraintSet& cs, const NoiseSchedule& sched, const ScoreNet& net,
                          const std::vector<Trajectory>& batch, const std::vector<LossTerm>& terms, bool with_grad) {
  if (net.underdamped()) throw std::invalid_argument("cwpm_loss_over: model was built for the underdamped regime");
  return finish(net, prepare_over(cs, sched, batch, terms), static_cast<int>(batch.size()), sched.N(), with_grad);
}

LossResult cwpm_loss_over(const ConstraintSet& cs, const NoiseSchedule& sched, const BatchScore& score,
                          const std::vector<Trajectory>& batch, const std::vector<LossTerm>& terms) {
  return finish(score, prepare_over(cs, sched, batch, terms), false, static_cast<int>(batch.size()), sched.N());
}

LossResult cwpm_loss_under(const ConstraintSet& cs, const NoiseSchedule& sched, double gamma, const ScoreNet& net,
                           const std::vector<Trajectory>& batch, const std::vector<Vec>& terminal_momenta,
                           const std::vector<LossTerm>& terms, bool with_grad) {
  if (!net.underdamped()) throw std::invalid_argument("cwpm_loss_under: model was built for the overdamped regime");
  return finish(net, prepare_under(cs, sched, gamma, batch, terminal_momenta, terms), static_cast<int>(batch.size()),
                sched.N(), with_grad);
}

LossResult cwpm_loss_under(const ConstraintSet& cs, const NoiseSchedule& sched, double gamma, const BatchScore& score,
                           const std::vector<Trajectory>& batch, const std::vector<Vec>& terminal_momenta,
                           const std::vector<LossTerm>& terms) {
  return finish(score, prepare_under(cs, sched, gamma, batch, terminal_momenta, terms), true,
                static_cast<int>(batch.size()), sched.N());
}

// ---------------------------------------------------------------------------

void optimizer_step(OptimizerState& st, Vec& theta, const Vec& grad, double lr) {
  if (grad.size() != theta.size()) throw DimensionMismatch("optimizer_step: gradient size differs from parameters");
  if (st.kind == OptimizerKind::SGD) {
    theta -= lr * grad;
    ++st.t;
    return;
  }
  if (st.m.size() != theta.size()) {
    st.m = Vec::Zero(theta.size());
    st.v = Vec::Zero(theta.size());
    st.t = 0;
  }
  ++st.t;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  theta.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.delta);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (l_f < 1) throw std::invalid_argument("train: l_f must be >= 1");
  if (steps_per_traj < 0) throw std::invalid_argument("train: steps_per_traj must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && delta > 0.0))
    throw std::invalid_argument("train: bad optimizer moments");
  if (!(lr_min >= 0.0 && lr_min <= lr)) throw std::invalid_argument("train: lr_min must lie in [0, lr]");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("train: ema_decay must lie in [0, 1)");
}

double TrainConfig::lr_at(int epoch) const {
  if (lr_schedule == LrSchedule::Constant || epochs <= 1) return lr;
  const double u = static_cast<double>(epoch) / (epochs - 1);
  return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(std::numbers::pi * u));
}

std::vector<LossReport> train(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                              const TrainConfig& tcfg, const std::vector<Vec>& dataset, ScoreNet& net,
                              const std::function<void(const LossReport&)>& on_epoch) {
  tcfg.validate();
  cfg.validate();
  std::vector<LossReport> reports;
  if (tcfg.epochs == 0) return reports;
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (net.underdamped() != is_underdamped(cfg.mode))
    throw std::invalid_argument("train: model regime does not match sampler mode");

  const bool under = is_underdamped(cfg.mode);
  const int N = sched.N();
  Rng rng(derive_seed(tcfg.seed, 0xC0FFEE));
  OptimizerState opt;
  opt.kind = tcfg.optimizer;
  opt.beta1 = tcfg.beta1;
  opt.beta2 = tcfg.beta2;
  opt.delta = tcfg.delta;

  std::vector<Trajectory> cache;
  std::vector<Vec> momenta;
  std::uint64_t cache_id = 0;
  int cache_age = 0;
  SimulateOptions sim;
  sim.record_diagnostics = false;
  Vec ema = net.params();

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    if (epoch % tcfg.l_f == 0) {
      std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
      std::vector<Vec> starts(tcfg.batch);
      for (auto& s : starts) s = dataset[pick(rng)];
      ++cache_id;
      cache = simulate_forward_batch(cs, cfg, sched, starts, derive_seed(tcfg.seed, cache_id), tcfg.threads, sim);
      momenta.clear();
      if (under) {
        Rng prng(derive_seed(tcfg.seed ^ 0x9E3779B97F4A7C15ULL, cache_id));
        for (std::size_t i = 0; i < cache.size(); ++i) momenta.push_back(cfg.noise_scale * standard_normal(prng, cs.dim));
      }
      cache_age = 0;
    }

    const auto terms = tcfg.steps_per_traj == 0 ? full_sum_terms(tcfg.batch, N)
                                                : subsampled_terms(tcfg.batch, N, tcfg.steps_per_traj, rng);
    const LossResult lr = under ? cwpm_loss_under(cs, sched, cfg.gamma, net, cache, momenta, terms)
                                : cwpm_loss_over(cs, sched, net, cache, terms);
    if (!std::isfinite(lr.loss) || !lr.grad.allFinite())
      throw NumericalFailure("non-finite training loss at epoch " + std::to_string(epoch));

    LossReport rep;
    rep.epoch = epoch;
    rep.loss = lr.loss;
    rep.per_k = lr.per_k;
    rep.grad_norm = lr.grad.norm();
    rep.lr = tcfg.lr_at(epoch);
    rep.cache_age = cache_age;
    rep.cache_id = cache_id;

    Vec backup = net.params();
    optimizer_step(opt, net.params(), lr.grad, rep.lr);
    if (!net.params().allFinite()) {
      net.params() = std::move(backup);
      throw NumericalFailure("non-finite parameters after epoch " + std::to_string(epoch));
    }
    if (tcfg.ema_decay > 0.0) ema = tcfg.ema_decay * ema + (1.0 - tcfg.ema_decay) * net.params();
    ++cache_age;
    reports.push_back(rep);
    if (on_epoch) on_epoch(rep);
  }
  if (tcfg.ema_decay > 0.0) net.params() = ema;
  return reports;
}

}  // namespace ldiff
