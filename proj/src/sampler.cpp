#include "ldiff/sampler.hpp"

#include "ldiff/parallel.hpp"
#include "ldiff/random.hpp"
#include "ldiff/trajectory.hpp"

#include <cmath>
#include <optional>

namespace ldiff {

namespace {

enum class ChainStatus { kAlive, kProjectionFailure, kNonFinite };

struct Chain {
  Rng rng;
  Vec x;       // x_{k+1}
  Vec x_next;  // x_{k+2} (underdamped only)
  std::optional<GeometryCache> at;
  PseudoMomentum p;
  ChainStatus status = ChainStatus::kAlive;
  long retries = 0;
};

}  // namespace

SampleResult sample_backward(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                             const ScoreModel& model, const PriorSampler& prior, int n, std::uint64_t seed,
                             const SampleOptions& opts) {
  cfg.validate();
  if (model.dim() != cs.dim) throw DimensionMismatch("sample_backward: model dimension differs from constraint set");
  if (model.underdamped() != is_underdamped(cfg.mode))
    throw DimensionMismatch("sample_backward: model regime does not match sampler mode");
  if (cfg.use_curvature && !cs.has_hessians()) throw MissingHessian();

  SampleResult res;
  if (n <= 0) return res;
  const int N = sched.N();
  const int d = cs.dim;
  const bool under = is_underdamped(cfg.mode);
  SamplerConfig unit = cfg;
  unit.noise_scale = 1.0;

  auto draw = [&](Rng& rng) {
    Vec z = standard_normal(rng, d);
    if (cfg.noise_scale != 1.0) z *= cfg.noise_scale;
    return z;
  };

  std::vector<Chain> chains(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    Chain& c = chains[i];
    c.rng = make_stream(seed, i);
    c.x = prior(c.rng);
    if (c.x.size() != d) throw DimensionMismatch("sample_backward: prior sample has wrong dimension");
    if (under) {
      // Terminal momentum p_N = Pi(x_N) zeta and pseudo-point x_{N+1}.
      const auto at = geometry_at(cs, c.x);
      const Vec pN = at.proj * draw(c.rng);
      c.x_next = c.x + std::pow(sched.sigma_at(N), 2) * sched.dt() * pN;
    }
  });

  Mat X(d, n), P(under ? d : 0, under ? n : 0);
  for (int k1 = N; k1 >= 1; --k1) {
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Chain& c = chains[i];
      if (c.status != ChainStatus::kAlive) {
        X.col(i).setZero();
        if (under) P.col(i).setZero();
        return;
      }
      c.at = geometry_at(cs, c.x);
      X.col(i) = c.x;
      if (under) {
        c.p = pseudo_momentum_bwd(*c.at, sched, k1, c.x_next);
        P.col(i) = c.p.value;
      }
    });
    const Mat S = model.eval_batch(k1, X, under ? &P : nullptr);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Chain& c = chains[i];
      if (c.status != ChainStatus::kAlive) return;
      const Vec s = S.col(i);
      try {
        Vec prev;
        if (!is_projected(cfg.mode)) {
          const Vec z = draw(c.rng);
          prev = under ? backward_step_ulla(cs, unit, sched, k1, *c.at, c.p, s, z)
                       : backward_step_olla(cs, unit, sched, k1, *c.at, s, z);
        } else {
          for (int attempt = 0;; ++attempt) {
            try {
              prev = backward_step_projected(cs, unit, sched, k1, *c.at, under ? &c.p : nullptr, s, draw(c.rng));
              break;
            } catch (const ProjectionFailure&) {
              if (attempt >= cfg.projection_retries) throw;
              ++c.retries;
            }
          }
        }
        if (under) c.x_next = std::move(c.x);
        c.x = std::move(prev);
      } catch (const ProjectionFailure&) {
        c.status = ChainStatus::kProjectionFailure;
      } catch (const NonFiniteState&) {
        c.status = ChainStatus::kNonFinite;
      }
    });
  }

  if (cfg.terminal_projection && N > 0) {
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Chain& c = chains[i];
      if (c.status != ChainStatus::kAlive) return;
      try {
        c.x = terminal_project(cs, cfg.newton, c.x);
      } catch (const ProjectionFailure&) {
        c.status = ChainStatus::kProjectionFailure;
      }
    });
  }

  for (auto& c : chains) {
    res.projection_retries += c.retries;
    switch (c.status) {
      case ChainStatus::kProjectionFailure: ++res.projection_failures; continue;
      case ChainStatus::kNonFinite: ++res.nonfinite_failures; continue;
      case ChainStatus::kAlive: break;
    }
    if (opts.accept && !opts.accept(c.x)) {
      ++res.rejected;
      continue;
    }
    res.samples.push_back(std::move(c.x));
  }
  return res;
}

}  // namespace ldiff
