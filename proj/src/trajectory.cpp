#include "ldiff/trajectory.hpp"

#include "ldiff/parallel.hpp"
#include "ldiff/random.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace ldiff {

static_assert(std::endian::native == std::endian::little, "trajectory dumps assume a little-endian host");

double h_inf_norm(const ConstraintSet& cs, const Vec& x) {
  return cs.num_eq > 0 ? cs.h(x).lpNorm<Eigen::Infinity>() : 0.0;
}

double g_plus_max(const ConstraintSet& cs, const Vec& x) {
  return cs.num_ineq > 0 ? std::max(0.0, cs.g(x).maxCoeff()) : 0.0;
}

Vec terminal_project(const ConstraintSet& cs, const NewtonOptions& opts, const Vec& x) {
  NewtonOptions o = opts;
  o.check_inequalities = false;
  return newton_project(cs, x, x, o).x;
}

namespace {

Vec draw(Rng& rng, const SamplerConfig& cfg, Eigen::Index d) {
  Vec z = standard_normal(rng, d);
  if (cfg.noise_scale != 1.0) z *= cfg.noise_scale;
  return z;
}

}  // namespace

Trajectory simulate_forward(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                            const Vec& x0, Rng& rng, const SimulateOptions& opts) {
  if (x0.size() != cs.dim) throw DimensionMismatch("simulate_forward: x0 has wrong dimension");
  if (cfg.use_curvature && !cs.has_hessians()) throw MissingHessian();
  const int N = sched.N();
  const int d = cs.dim;

  Trajectory tr;
  tr.dim = d;
  tr.N = N;
  tr.mode = cfg.mode;
  tr.states.resize(static_cast<std::size_t>(N + 1) * d);
  tr.state(0) = x0;

  // Step kernels take unit-variance noise and apply noise_scale themselves.
  SamplerConfig unit = cfg;
  unit.noise_scale = 1.0;

  Vec prev;  // x_{k-1}
  if (is_underdamped(cfg.mode)) {
    const auto at0 = geometry_at(cs, x0);
    const Vec p0 = at0.proj * draw(rng, cfg, d);
    prev = x0 - std::pow(sched.sigma_clamped(-1), 2) * sched.dt() * p0;
  }

  for (int k = 0; k < N; ++k) {
    const Vec x = tr.state(k);
    const auto at = geometry_at(cs, x);
    Vec next;
    if (!is_projected(cfg.mode)) {
      const Vec z = draw(rng, cfg, d);
      if (cfg.mode == Mode::OLLA) {
        next = forward_step_olla(cs, unit, sched, k, at, z);
      } else {
        next = forward_step_ulla(cs, unit, sched, k, at, pseudo_momentum_fwd(at, sched, k, prev), z);
      }
    } else {
      PseudoMomentum p;
      if (cfg.mode == Mode::ULLA_P) p = pseudo_momentum_fwd(at, sched, k, prev);
      for (int attempt = 0;; ++attempt) {
        try {
          next = forward_step_projected(cs, unit, sched, k, at, cfg.mode == Mode::ULLA_P ? &p : nullptr,
                                        draw(rng, cfg, d));
          break;
        } catch (const ProjectionFailure&) {
          if (attempt >= cfg.projection_retries) throw;
          ++tr.projection_retries;
        }
      }
    }
    prev = x;
    tr.state(k + 1) = next;
  }

  if (cfg.terminal_projection && N > 0) {
    try {
      tr.state(N) = terminal_project(cs, cfg.newton, tr.terminal());
    } catch (const ProjectionFailure& e) {
      throw e.at_step(N);
    }
  }

  if (opts.record_diagnostics) {
    tr.h_inf.resize(N + 1);
    tr.g_plus_max.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
      const Vec x = tr.state(k);
      tr.h_inf[k] = h_inf_norm(cs, x);
      tr.g_plus_max[k] = g_plus_max(cs, x);
    }
  }
  return tr;
}

std::vector<Trajectory> simulate_forward_batch(const ConstraintSet& cs, const SamplerConfig& cfg,
                                               const NoiseSchedule& sched, const std::vector<Vec>& x0,
                                               std::uint64_t seed, int threads, const SimulateOptions& opts) {
  std::vector<Trajectory> out(x0.size());
  parallel_for(x0.size(), threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    out[i] = simulate_forward(cs, cfg, sched, x0[i], rng, opts);
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kTrajMagic[8] = {'L', 'D', 'T', 'R', 'A', 'J', '0', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("trajectory dump truncated");
  return v;
}

}  // namespace

void write_trajectory_binary(std::ostream& os, const Trajectory& tr) {
  os.write(kTrajMagic, 8);
  put<std::uint64_t>(os, tr.dim);
  put<std::uint64_t>(os, tr.N);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(tr.mode));
  os.write(reinterpret_cast<const char*>(tr.states.data()),
           static_cast<std::streamsize>(tr.states.size() * sizeof(double)));
  if (!os) throw Error("failed to write trajectory dump");
}

Trajectory read_trajectory_binary(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTrajMagic, 8) != 0) throw Error("not a trajectory dump (bad magic)");
  Trajectory tr;
  tr.dim = static_cast<int>(get<std::uint64_t>(is));
  tr.N = static_cast<int>(get<std::uint64_t>(is));
  const auto mode = get<std::uint64_t>(is);
  if (mode > 3) throw Error("trajectory dump has unknown mode");
  tr.mode = static_cast<Mode>(mode);
  tr.states.resize(static_cast<std::size_t>(tr.N + 1) * tr.dim);
  is.read(reinterpret_cast<char*>(tr.states.data()), static_cast<std::streamsize>(tr.states.size() * sizeof(double)));
  if (!is) throw Error("trajectory dump truncated");
  return tr;
}

void save_trajectory(const std::string& path, const Trajectory& tr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  write_trajectory_binary(os, tr);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_trajectory_binary(is);
}

void write_trajectory_csv(std::ostream& os, const ConstraintSet& cs, const Trajectory& tr) {
  os << "step";
  for (int i = 0; i < tr.dim; ++i) os << ",x" << i;
  os << ",h_inf,g_plus_max\n";
  os << std::setprecision(17);
  for (int k = 0; k <= tr.N; ++k) {
    const Vec x = tr.state(k);
    os << k;
    for (int i = 0; i < tr.dim; ++i) os << ',' << x[i];
    os << ',' << h_inf_norm(cs, x) << ',' << g_plus_max(cs, x) << '\n';
  }
}

}  // namespace ldiff
