#include "ldiff/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace ldiff {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::OLLA: return "OLLA";
    case Mode::OLLA_P: return "OLLA_P";
    case Mode::ULLA: return "ULLA";
    case Mode::ULLA_P: return "ULLA_P";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "OLLA") return Mode::OLLA;
  if (s == "OLLA_P" || s == "OLLA-P") return Mode::OLLA_P;
  if (s == "ULLA") return Mode::ULLA;
  if (s == "ULLA_P" || s == "ULLA-P") return Mode::ULLA_P;
  throw std::invalid_argument("unknown sampler mode '" + s + "'");
}

void SamplerConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("sampler: alpha must be >= 0");
  if (!is_projected(mode) && !(alpha > 0.0)) throw std::invalid_argument("sampler: landing modes need alpha > 0");
  if (is_underdamped(mode) && !(gamma > 0.0)) throw std::invalid_argument("sampler: gamma must be > 0");
  if (newton.max_iter < 1 || !(newton.tol > 0.0)) throw std::invalid_argument("sampler: bad newton options");
  if (projection_retries < 0) throw std::invalid_argument("sampler: projection_retries must be >= 0");
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("sampler: noise_scale must be >= 0");
}

namespace {

void check_finite(const Vec& x, int step, const char* where) {
  if (!x.allFinite()) throw NonFiniteState(step, where);
}

double momentum_scale(const NoiseSchedule& sched, int k) {
  const double s = sched.sigma_clamped(k);
  const double denom = s * s * sched.dt();
  if (!(denom > 0.0)) throw NumericalFailure("pseudo-momentum undefined: sigma^2 dt = 0");
  return 1.0 / denom;
}

// gradJ^T G^+ v
Vec lift(const GeometryCache& c, const Vec& v) { return c.gradJ.transpose() * (c.gram_pinv * v); }

}  // namespace

PseudoMomentum pseudo_momentum_fwd(const GeometryCache& at_k, const NoiseSchedule& sched, int k, const Vec& x_km1) {
  return {at_k.proj * ((at_k.x - x_km1) * momentum_scale(sched, k - 1))};
}

PseudoMomentum pseudo_momentum_fwd(const ConstraintSet& cs, const NoiseSchedule& sched, int k, const Vec& x_k,
                                   const Vec& x_km1) {
  return pseudo_momentum_fwd(geometry_at(cs, x_k), sched, k, x_km1);
}

PseudoMomentum pseudo_momentum_bwd(const GeometryCache& at_k1, const NoiseSchedule& sched, int k1, const Vec& x_k2) {
  return {at_k1.proj * ((x_k2 - at_k1.x) * momentum_scale(sched, k1 + 1))};
}

PseudoMomentum pseudo_momentum_bwd(const ConstraintSet& cs, const NoiseSchedule& sched, int k1, const Vec& x_k1,
                                   const Vec& x_k2) {
  return pseudo_momentum_bwd(geometry_at(cs, x_k1), sched, k1, x_k2);
}

// ---------------------------------------------------------------------------
// Overdamped
// ---------------------------------------------------------------------------

Vec forward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const GeometryCache& at_k, const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k), 2) * sched.dt();
  const double landing = cfg.olla_forward_landing == OllaForwardLanding::kLemma ? cfg.alpha * s2dt
                                                                                 : 0.5 * cfg.alpha * s2dt * s2dt / sched.dt();
  const Vec& x = at_k.x;
  Vec out = x - at_k.proj * (0.5 * s2dt * cs.eval_grad_f(x) - std::sqrt(s2dt) * cfg.noise_scale * noise);
  out -= landing * landing_direction(at_k);
  if (cfg.use_curvature) out += 0.5 * s2dt * mean_curvature(at_k, cs);
  check_finite(out, k, "forward OLLA");
  return out;
}

Vec forward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const Vec& x_k, const Vec& noise) {
  return forward_step_olla(cs, cfg, sched, k, geometry_at(cs, x_k), noise);
}

Vec backward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const GeometryCache& at_k1, const Vec& score, const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k1), 2) * sched.dt();
  const Vec& x = at_k1.x;
  Vec out = x + at_k1.proj * (0.5 * s2dt * (cs.eval_grad_f(x) + score) + std::sqrt(s2dt) * cfg.noise_scale * noise);
  out -= cfg.alpha * s2dt * landing_direction(at_k1);
  if (cfg.use_curvature) out += 0.5 * s2dt * mean_curvature(at_k1, cs);
  check_finite(out, k1 - 1, "backward OLLA");
  return out;
}

Vec backward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const Vec& x_k1, const Vec& score, const Vec& noise) {
  return backward_step_olla(cs, cfg, sched, k1, geometry_at(cs, x_k1), score, noise);
}

// ---------------------------------------------------------------------------
// Underdamped (collapsed position-only chain)
// ---------------------------------------------------------------------------

Vec forward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const GeometryCache& at_k, const PseudoMomentum& p_fwd, const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k), 2) * sched.dt();
  const double a = friction_factor(cfg.gamma, sched.sigma_at(k), sched.dt());
  const Vec& x = at_k.x;
  const Vec& p = p_fwd.value;
  Vec out = x + at_k.proj * (s2dt * (a * p - s2dt * cs.eval_grad_f(x)) +
                             s2dt * std::sqrt(1.0 - a * a) * cfg.noise_scale * noise);
  out -= cfg.alpha * s2dt * landing_direction(at_k);
  if (cfg.use_curvature && at_k.rows() > 0) {
    const Vec corr = curvature_H1(at_k, cs, p) - cfg.alpha * curvature_H2_collapsed(at_k, cs, p);
    out -= s2dt * s2dt * lift(at_k, corr);
  }
  check_finite(out, k, "forward ULLA");
  return out;
}

Vec forward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const Vec& x_k, const Vec& x_km1, const Vec& noise) {
  const auto at_k = geometry_at(cs, x_k);
  return forward_step_ulla(cs, cfg, sched, k, at_k, pseudo_momentum_fwd(at_k, sched, k, x_km1), noise);
}

Vec backward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const GeometryCache& at_k1, const PseudoMomentum& p_bwd, const Vec& score, const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k1), 2) * sched.dt();
  const double a = friction_factor(cfg.gamma, sched.sigma_at(k1), sched.dt());
  const Vec& x = at_k1.x;
  const Vec& p = p_bwd.value;
  Vec out = x - at_k1.proj * (s2dt * a * p + s2dt * s2dt * (cs.eval_grad_f(x) + score) -
                              s2dt * std::sqrt(1.0 - a * a) * cfg.noise_scale * noise);
  out -= cfg.alpha * s2dt * landing_direction(at_k1);
  if (cfg.use_curvature && at_k1.rows() > 0) {
    const Vec corr = curvature_H1(at_k1, cs, p) + cfg.alpha * curvature_H2_collapsed(at_k1, cs, p);
    out -= s2dt * s2dt * lift(at_k1, corr);
  }
  check_finite(out, k1 - 1, "backward ULLA");
  return out;
}

Vec backward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const Vec& x_k1, const Vec& x_k2, const Vec& score, const Vec& noise) {
  const auto at = geometry_at(cs, x_k1);
  return backward_step_ulla(cs, cfg, sched, k1, at, pseudo_momentum_bwd(at, sched, k1, x_k2), score, noise);
}

// ---------------------------------------------------------------------------
// Projection variants
// ---------------------------------------------------------------------------

Vec forward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                           const GeometryCache& at_k, const PseudoMomentum* p_fwd, const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k), 2) * sched.dt();
  const Vec& x = at_k.x;
  Vec proposal;
  if (cfg.mode == Mode::OLLA_P) {
    proposal = x - at_k.proj * (0.5 * s2dt * cs.eval_grad_f(x) - std::sqrt(s2dt) * cfg.noise_scale * noise);
  } else if (cfg.mode == Mode::ULLA_P) {
    if (p_fwd == nullptr) throw std::invalid_argument("ULLA_P step needs a pseudo-momentum");
    const double a = friction_factor(cfg.gamma, sched.sigma_at(k), sched.dt());
    proposal = x + at_k.proj * (s2dt * (a * p_fwd->value - s2dt * cs.eval_grad_f(x)) +
                                s2dt * std::sqrt(1.0 - a * a) * cfg.noise_scale * noise);
  } else {
    throw std::invalid_argument("forward_step_projected called in landing mode " + to_string(cfg.mode));
  }
  check_finite(proposal, k, "forward projected proposal");
  try {
    return newton_project(cs, proposal, x, cfg.newton).x;
  } catch (const ProjectionFailure& e) {
    throw e.at_step(k);
  }
}

Vec forward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                           const Vec& x_k, const Vec& x_km1, const Vec& noise) {
  const auto at_k = geometry_at(cs, x_k);
  if (cfg.mode == Mode::ULLA_P) {
    const auto p = pseudo_momentum_fwd(at_k, sched, k, x_km1);
    return forward_step_projected(cs, cfg, sched, k, at_k, &p, noise);
  }
  return forward_step_projected(cs, cfg, sched, k, at_k, nullptr, noise);
}

Vec backward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                            const GeometryCache& at_k1, const PseudoMomentum* p_bwd, const Vec& score,
                            const Vec& noise) {
  const double s2dt = std::pow(sched.sigma_at(k1), 2) * sched.dt();
  const Vec& x = at_k1.x;
  Vec proposal;
  if (cfg.mode == Mode::OLLA_P) {
    proposal = x + at_k1.proj * (0.5 * s2dt * (cs.eval_grad_f(x) + score) + std::sqrt(s2dt) * cfg.noise_scale * noise);
  } else if (cfg.mode == Mode::ULLA_P) {
    if (p_bwd == nullptr) throw std::invalid_argument("ULLA_P step needs a pseudo-momentum");
    const double a = friction_factor(cfg.gamma, sched.sigma_at(k1), sched.dt());
    proposal = x - at_k1.proj * (s2dt * a * p_bwd->value + s2dt * s2dt * (cs.eval_grad_f(x) + score) -
                                 s2dt * std::sqrt(1.0 - a * a) * cfg.noise_scale * noise);
  } else {
    throw std::invalid_argument("backward_step_projected called in landing mode " + to_string(cfg.mode));
  }
  check_finite(proposal, k1 - 1, "backward projected proposal");
  try {
    return newton_project(cs, proposal, x, cfg.newton).x;
  } catch (const ProjectionFailure& e) {
    throw e.at_step(k1 - 1);
  }
}

Vec backward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                            const Vec& x_k1, const Vec& x_k2, const Vec& score, const Vec& noise) {
  const auto at = geometry_at(cs, x_k1);
  if (cfg.mode == Mode::ULLA_P) {
    const auto p = pseudo_momentum_bwd(at, sched, k1, x_k2);
    return backward_step_projected(cs, cfg, sched, k1, at, &p, score, noise);
  }
  return backward_step_projected(cs, cfg, sched, k1, at, nullptr, score, noise);
}

// ---------------------------------------------------------------------------

DecayPrediction decay_oracle(const ConstraintSet& cs, const NoiseSchedule& sched, double alpha, const Vec& x0,
                             double t) {
  if (!(alpha > 0.0)) throw std::invalid_argument("decay_oracle: alpha must be positive");
  const double decay = std::exp(-alpha * sched.cumulative_S(t));
  DecayPrediction out;
  out.h_pred = cs.num_eq > 0 ? Vec(cs.h(x0) * decay) : Vec();
  out.g_pred = Vec::Zero(cs.num_ineq);
  out.tau = Vec::Zero(cs.num_ineq);
  if (cs.num_ineq > 0) {
    const Vec g0 = cs.g(x0);
    for (int j = 0; j < cs.num_ineq; ++j) {
      if (g0[j] < 0.0 || !(cs.epsilon > 0.0)) {
        out.g_pred[j] = g0[j];
        continue;
      }
      const double level = std::log((g0[j] + cs.epsilon) / cs.epsilon) / alpha;
      out.tau[j] = sched.inverse_S(level);
      out.g_pred[j] = t <= out.tau[j] ? -cs.epsilon + (g0[j] + cs.epsilon) * decay : 0.0;
    }
  }
  return out;
}

}  // namespace ldiff
