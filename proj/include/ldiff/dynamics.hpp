#pragma once

#include "ldiff/geometry.hpp"
#include "ldiff/schedule.hpp"
#include "ldiff/types.hpp"

#include <cstdint>
#include <string>

namespace ldiff {

enum class Mode { OLLA, OLLA_P, ULLA, ULLA_P };

inline bool is_underdamped(Mode m) { return m == Mode::ULLA || m == Mode::ULLA_P; }
inline bool is_projected(Mode m) { return m == Mode::OLLA_P || m == Mode::ULLA_P; }

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);  // throws std::invalid_argument

/// Scaling of the landing term in the forward overdamped kernel.
///  - kLemma:       alpha sigma_k^2 dt, so J decays as exp(-alpha S(t)).
///  - kEulerDisplay: alpha sigma_k^4 dt / 2, the factored Euler-Maruyama form.
enum class OllaForwardLanding { kLemma, kEulerDisplay };

struct SamplerConfig {
  Mode mode = Mode::ULLA;
  double alpha = 50.0;
  double gamma = 3.0;
  bool use_curvature = false;
  bool terminal_projection = true;
  NewtonOptions newton{};
  /// Fresh-noise retries for a failed projection step before giving up.
  int projection_retries = 5;
  /// Multiplies every Gaussian draw (step noise and momentum seeds). 0 gives
  /// the deterministic drift-only chain.
  double noise_scale = 1.0;
  OllaForwardLanding olla_forward_landing = OllaForwardLanding::kLemma;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Tangentially projected finite-difference velocity anchored at `anchor`.
struct PseudoMomentum {
  Vec value;
};

/// Pi(x_k) (x_k - x_{k-1}) / (sigma_{k-1}^2 dt).
PseudoMomentum pseudo_momentum_fwd(const ConstraintSet& cs, const NoiseSchedule& sched, int k, const Vec& x_k,
                                   const Vec& x_km1);
PseudoMomentum pseudo_momentum_fwd(const GeometryCache& at_k, const NoiseSchedule& sched, int k, const Vec& x_km1);

/// Pi(x_{k+1}) (x_{k+2} - x_{k+1}) / (sigma_{k+2}^2 dt), called with k1 = k + 1.
PseudoMomentum pseudo_momentum_bwd(const ConstraintSet& cs, const NoiseSchedule& sched, int k1, const Vec& x_k1,
                                   const Vec& x_k2);
PseudoMomentum pseudo_momentum_bwd(const GeometryCache& at_k1, const NoiseSchedule& sched, int k1, const Vec& x_k2);

// ---------------------------------------------------------------------------
// Transition kernels. `noise` is a caller-supplied standard normal vector[d].
// All throw NonFiniteState on NaN/Inf output.
// ---------------------------------------------------------------------------

Vec forward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const Vec& x_k, const Vec& noise);
Vec forward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const GeometryCache& at_k, const Vec& noise);

/// x_k from x_{k+1}; `score` approximates 2 grad ln q_{k+1}(x_{k+1}).
Vec backward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const Vec& x_k1, const Vec& score, const Vec& noise);
Vec backward_step_olla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const GeometryCache& at_k1, const Vec& score, const Vec& noise);

Vec forward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const Vec& x_k, const Vec& x_km1, const Vec& noise);
Vec forward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                      const GeometryCache& at_k, const PseudoMomentum& p_fwd, const Vec& noise);

/// x_k from (x_{k+1}, x_{k+2}); `score` approximates 2 gamma [grad_p ln q + p~].
Vec backward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const Vec& x_k1, const Vec& x_k2, const Vec& score, const Vec& noise);
Vec backward_step_ulla(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                       const GeometryCache& at_k1, const PseudoMomentum& p_bwd, const Vec& score, const Vec& noise);

/// Tangential update followed by Newton projection anchored at x_k
/// (OLLA_P ignores x_km1). Throws ProjectionFailure.
Vec forward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                           const Vec& x_k, const Vec& x_km1, const Vec& noise);
Vec forward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k,
                           const GeometryCache& at_k, const PseudoMomentum* p_fwd, const Vec& noise);

/// Backward counterpart (OLLA_P ignores x_k2). Throws ProjectionFailure.
Vec backward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                            const Vec& x_k1, const Vec& x_k2, const Vec& score, const Vec& noise);
Vec backward_step_projected(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched, int k1,
                            const GeometryCache& at_k1, const PseudoMomentum* p_bwd, const Vec& score,
                            const Vec& noise);

// ---------------------------------------------------------------------------
// Closed-form constraint decay
// ---------------------------------------------------------------------------

struct DecayPrediction {
  Vec h_pred;  // h(x0) exp(-alpha S(t))
  Vec g_pred;  // -eps + (g(x0) + eps) exp(-alpha S(t)) until tau, then 0 (upper bound); g(x0) if inactive at x0
  Vec tau;     // hitting time of g = 0; 0 for constraints inactive at x0
};

DecayPrediction decay_oracle(const ConstraintSet& cs, const NoiseSchedule& sched, double alpha, const Vec& x0, double t);

}  // namespace ldiff
