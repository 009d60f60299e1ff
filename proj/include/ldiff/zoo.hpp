#pragma once

#include "ldiff/sampler.hpp"
#include "ldiff/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace ldiff {

enum class TaskKind { Sphere, SO, Disk, SphereCap };
enum class PriorKind { Uniform, EmpiricalTerminal };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::Sphere;
  ConstraintSet cs;
  PriorKind prior = PriorKind::Uniform;
  int n = 0;          // ambient dimension for sphere/disk, matrix size for SO(n)
  double zmax = 0.0;  // sphere cap only
  /// Output filter applied to generated samples (det = +1 on SO(n)); empty accepts all.
  std::function<bool(const Vec&)> accept;
};

/// Unit sphere S^{d-1} in R^d: h = |x|^2 - 1.
TaskSpec make_sphere(int d);
/// SO(n) in R^{n*n} (column-major vec X): h_ij = (X^T X - I)_ij for i <= j.
TaskSpec make_son(int n);
/// Closed unit ball in R^d: g = |x|^2 - 1.
TaskSpec make_disk(int d, double epsilon = 0.05);
/// Sphere cap {|x| = 1, z <= zmax} in R^3.
TaskSpec make_sphere_cap(double zmax, double epsilon = 0.05);

/// n x n matrix from its column-major vectorisation, and back.
Mat unvec(const Vec& x, int n);
Vec vec(const Mat& X);

Vec sample_uniform(const TaskSpec& task, Rng& rng);
std::vector<Vec> prior_uniform(const TaskSpec& task, Rng& rng, int n);

/// Pi(x) zeta, zeta standard normal.
Vec prior_momentum(const ConstraintSet& cs, const Vec& x, Rng& rng);

/// Uniform draws from a stored pool of forward-chain terminal states.
class EmpiricalPrior {
 public:
  explicit EmpiricalPrior(std::vector<Vec> pool);
  Vec operator()(Rng& rng) const;
  const std::vector<Vec>& pool() const { return pool_; }

 private:
  std::vector<Vec> pool_;
};

/// Simulates pool_size forward chains from uniformly resampled data points.
EmpiricalPrior prior_empirical_terminal(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                                        const std::vector<Vec>& dataset, std::uint64_t seed, int pool_size,
                                        int threads = 1);

struct VmfMode {
  Vec mean;  // unit vector
  double kappa = 0.0;
};

/// One von Mises-Fisher draw on S^{d-1} (Wood's rejection scheme).
Vec sample_vmf(const Vec& mean, double kappa, Rng& rng);

std::vector<Vec> dataset_vmf_mixture(const std::vector<VmfMode>& modes, const std::vector<double>& weights, int n,
                                     Rng& rng);

struct SonMixture {
  std::vector<Mat> centers;
  std::vector<Vec> samples;
};

/// m Haar-random centre rotations; each sample is R (I + A / sqrt(concentration))
/// for a standard normal A, mapped back onto SO(n) by its polar factor.
/// Components are picked with equal weight.
SonMixture dataset_son_mixture(int n, int m, double concentration, int n_samples, Rng& rng);

/// Nearest rotation (polar factor with the determinant fixed to +1).
Mat nearest_rotation(const Mat& A);

// ---------------------------------------------------------------------------

/// Header "x0,...,x{d-1}", one sample per row, %.17g.
void write_samples_csv(std::ostream& os, const std::vector<Vec>& samples, int dim);
std::vector<Vec> read_samples_csv(std::istream& is);
void save_samples_csv(const std::string& path, const std::vector<Vec>& samples, int dim);
std::vector<Vec> load_samples_csv(const std::string& path);

}  // namespace ldiff
