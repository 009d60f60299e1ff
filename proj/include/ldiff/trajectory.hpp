#pragma once

#include "ldiff/dynamics.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ldiff {

/// Positions x_0..x_N of one chain, row-major (N+1) x d. ULLA chains store no
/// momentum; it is recomputed from consecutive positions.
struct Trajectory {
  int dim = 0;
  int N = 0;
  Mode mode = Mode::OLLA;
  std::vector<double> states;

  // Optional per-step diagnostics, empty when recording is off.
  std::vector<double> h_inf;
  std::vector<double> g_plus_max;
  int projection_retries = 0;

  Eigen::Map<const Vec> state(int k) const { return {states.data() + static_cast<std::size_t>(k) * dim, dim}; }
  Eigen::Map<Vec> state(int k) { return {states.data() + static_cast<std::size_t>(k) * dim, dim}; }
  Vec terminal() const { return state(N); }
  std::size_t storage_scalars() const { return states.size(); }
};

struct SimulateOptions {
  bool record_diagnostics = true;
};

/// Runs the configured forward kernel for sched.N() steps from x0.
/// Projection variants retry a failed step with fresh noise up to
/// cfg.projection_retries times. Errors carry the step index.
Trajectory simulate_forward(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                            const Vec& x0, Rng& rng, const SimulateOptions& opts = {});

/// One independent chain per starting point; chain i uses stream
/// derive_seed(seed, i), so results do not depend on `threads`.
std::vector<Trajectory> simulate_forward_batch(const ConstraintSet& cs, const SamplerConfig& cfg,
                                               const NoiseSchedule& sched, const std::vector<Vec>& x0,
                                               std::uint64_t seed, int threads = 1,
                                               const SimulateOptions& opts = {});

/// Terminal Newton projection onto {h = 0}; inequalities are left to the landing term.
Vec terminal_project(const ConstraintSet& cs, const NewtonOptions& opts, const Vec& x);

/// ||h(x)||_inf and max(max_j g_j(x), 0).
double h_inf_norm(const ConstraintSet& cs, const Vec& x);
double g_plus_max(const ConstraintSet& cs, const Vec& x);

// ---------------------------------------------------------------------------
// Dumps
// ---------------------------------------------------------------------------

/// 32-byte header {"LDTRAJ01", u64 d, u64 N, u64 mode} then (N+1)*d
/// little-endian float64, row-major.
void write_trajectory_binary(std::ostream& os, const Trajectory& tr);
Trajectory read_trajectory_binary(std::istream& is);
void save_trajectory(const std::string& path, const Trajectory& tr);
Trajectory load_trajectory(const std::string& path);

/// Columns: step, x0..x{d-1}, h_inf, g_plus_max.
void write_trajectory_csv(std::ostream& os, const ConstraintSet& cs, const Trajectory& tr);

}  // namespace ldiff
