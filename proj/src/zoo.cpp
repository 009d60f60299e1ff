#include "ldiff/zoo.hpp"

#include "ldiff/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ldiff {

namespace {

ConstraintSet sphere_constraints(int d) {
  ConstraintSet cs;
  cs.dim = d;
  cs.num_eq = 1;
  cs.h = [](const Vec& x) { return Vec::Constant(1, x.squaredNorm() - 1.0); };
  cs.grad_h = [](const Vec& x) { return Mat(2.0 * x.transpose()); };
  cs.hess_h = [d](const Vec&) { return std::vector<Mat>{2.0 * Mat::Identity(d, d)}; };
  return cs;
}

}  // namespace

TaskSpec make_sphere(int d) {
  if (d < 2) throw std::invalid_argument("make_sphere: d must be >= 2");
  TaskSpec t;
  t.name = "sphere" + std::to_string(d - 1);
  t.kind = TaskKind::Sphere;
  t.n = d;
  t.cs = sphere_constraints(d);
  return t;
}

TaskSpec make_son(int n) {
  if (n < 2) throw std::invalid_argument("make_son: n must be >= 2");
  const int d = n * n;
  const int m = n * (n + 1) / 2;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) pairs.emplace_back(i, j);

  std::vector<Mat> hess(m, Mat::Zero(d, d));
  for (int r = 0; r < m; ++r) {
    const auto [i, j] = pairs[r];
    for (int row = 0; row < n; ++row) {
      hess[r](row + n * i, row + n * j) += 1.0;
      hess[r](row + n * j, row + n * i) += 1.0;
    }
  }

  TaskSpec t;
  t.name = "so" + std::to_string(n);
  t.kind = TaskKind::SO;
  t.n = n;
  ConstraintSet& cs = t.cs;
  cs.dim = d;
  cs.num_eq = m;
  cs.h = [n, pairs](const Vec& x) {
    Eigen::Map<const Mat> X(x.data(), n, n);
    const Mat G = X.transpose() * X;
    Vec out(pairs.size());
    for (std::size_t r = 0; r < pairs.size(); ++r)
      out[r] = G(pairs[r].first, pairs[r].second) - (pairs[r].first == pairs[r].second ? 1.0 : 0.0);
    return out;
  };
  cs.grad_h = [n, pairs](const Vec& x) {
    Eigen::Map<const Mat> X(x.data(), n, n);
    Mat J = Mat::Zero(pairs.size(), n * n);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto [i, j] = pairs[r];
      for (int row = 0; row < n; ++row) {
        J(r, row + n * i) += X(row, j);
        J(r, row + n * j) += X(row, i);
      }
    }
    return J;
  };
  cs.hess_h = [hess](const Vec&) { return hess; };
  t.accept = [n](const Vec& x) { return unvec(x, n).determinant() > 0.0; };
  return t;
}

TaskSpec make_disk(int d, double epsilon) {
  if (d < 2) throw std::invalid_argument("make_disk: d must be >= 2");
  TaskSpec t;
  t.name = "disk" + std::to_string(d);
  t.kind = TaskKind::Disk;
  t.n = d;
  ConstraintSet& cs = t.cs;
  cs.dim = d;
  cs.num_ineq = 1;
  cs.epsilon = epsilon;
  cs.g = [](const Vec& x) { return Vec::Constant(1, x.squaredNorm() - 1.0); };
  cs.grad_g = [](const Vec& x) { return Mat(2.0 * x.transpose()); };
  cs.hess_g = [d](const Vec&) { return std::vector<Mat>{2.0 * Mat::Identity(d, d)}; };
  cs.validate();
  return t;
}

TaskSpec make_sphere_cap(double zmax, double epsilon) {
  if (!(zmax > -1.0 && zmax < 1.0)) throw std::invalid_argument("make_sphere_cap: zmax must lie in (-1, 1)");
  TaskSpec t;
  t.name = "sphere_cap";
  t.kind = TaskKind::SphereCap;
  t.n = 3;
  t.zmax = zmax;
  t.cs = sphere_constraints(3);
  ConstraintSet& cs = t.cs;
  cs.num_ineq = 1;
  cs.epsilon = epsilon;
  cs.g = [zmax](const Vec& x) { return Vec::Constant(1, x[2] - zmax); };
  cs.grad_g = [](const Vec&) {
    Mat G = Mat::Zero(1, 3);
    G(0, 2) = 1.0;
    return G;
  };
  cs.hess_g = [](const Vec&) { return std::vector<Mat>{Mat::Zero(3, 3)}; };
  cs.validate();
  return t;
}

Mat unvec(const Vec& x, int n) {
  if (x.size() != static_cast<Eigen::Index>(n) * n) throw DimensionMismatch("unvec: size is not n*n");
  return Eigen::Map<const Mat>(x.data(), n, n);
}

Vec vec(const Mat& X) { return Eigen::Map<const Vec>(X.data(), X.size()); }

// ---------------------------------------------------------------------------

namespace {

Mat haar_rotation(int n, Rng& rng) {
  Mat A(n, n);
  for (int j = 0; j < n; ++j) A.col(j) = standard_normal(rng, n);
  Eigen::HouseholderQR<Mat> qr(A);
  Mat Q = qr.householderQ() * Mat::Identity(n, n);
  const Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  if (Q.determinant() < 0.0) Q.col(0) = -Q.col(0);
  return Q;
}

Vec unit_gaussian(Rng& rng, int d) {
  for (;;) {
    Vec z = standard_normal(rng, d);
    const double nz = z.norm();
    if (nz > 1e-12) return z / nz;
  }
}

}  // namespace

Vec sample_uniform(const TaskSpec& task, Rng& rng) {
  switch (task.kind) {
    case TaskKind::Sphere: return unit_gaussian(rng, task.n);
    case TaskKind::SO: return vec(haar_rotation(task.n, rng));
    case TaskKind::Disk: {
      const Vec u = unit_gaussian(rng, task.n);
      return u * std::pow(uniform01(rng), 1.0 / task.n);
    }
    case TaskKind::SphereCap:
      for (;;) {
        Vec x = unit_gaussian(rng, 3);
        if (x[2] - task.zmax <= 0.0) return x;
      }
  }
  throw std::logic_error("sample_uniform: unknown task");
}

std::vector<Vec> prior_uniform(const TaskSpec& task, Rng& rng, int n) {
  std::vector<Vec> out;
  out.reserve(std::max(n, 0));
  for (int i = 0; i < n; ++i) out.push_back(sample_uniform(task, rng));
  return out;
}

Vec prior_momentum(const ConstraintSet& cs, const Vec& x, Rng& rng) {
  return geometry_at(cs, x).proj * standard_normal(rng, cs.dim);
}

EmpiricalPrior::EmpiricalPrior(std::vector<Vec> pool) : pool_(std::move(pool)) {
  if (pool_.empty()) throw std::invalid_argument("empirical prior: empty pool");
}

Vec EmpiricalPrior::operator()(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  return pool_[pick(rng)];
}

EmpiricalPrior prior_empirical_terminal(const ConstraintSet& cs, const SamplerConfig& cfg, const NoiseSchedule& sched,
                                        const std::vector<Vec>& dataset, std::uint64_t seed, int pool_size,
                                        int threads) {
  if (dataset.empty()) throw std::invalid_argument("empirical prior: empty dataset");
  if (pool_size < 1) throw std::invalid_argument("empirical prior: pool_size must be >= 1");
  Rng rng(derive_seed(seed, 0xE3917));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<Vec> starts(pool_size);
  for (auto& s : starts) s = dataset[pick(rng)];
  SimulateOptions opts;
  opts.record_diagnostics = false;
  const auto trajs = simulate_forward_batch(cs, cfg, sched, starts, derive_seed(seed, 0xE3918), threads, opts);
  std::vector<Vec> pool;
  pool.reserve(trajs.size());
  for (const auto& tr : trajs) pool.push_back(tr.terminal());
  return EmpiricalPrior(std::move(pool));
}

// ---------------------------------------------------------------------------

Vec sample_vmf(const Vec& mean, double kappa, Rng& rng) {
  const int p = static_cast<int>(mean.size());
  if (p < 2) throw std::invalid_argument("sample_vmf: dimension must be >= 2");
  if (std::abs(mean.norm() - 1.0) > 1e-8) throw std::invalid_argument("sample_vmf: mean must be a unit vector");
  if (!(kappa >= 0.0)) throw std::invalid_argument("sample_vmf: kappa must be >= 0");
  if (kappa == 0.0) return unit_gaussian(rng, p);

  double w;
  if (p == 3) {
    const double u = uniform01(rng);
    w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
  } else {
    const double pm1 = p - 1.0;
    const double b = pm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + pm1 * pm1));
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + pm1 * std::log(1.0 - x0 * x0);
    std::gamma_distribution<double> ga(pm1 / 2.0, 1.0);
    for (;;) {
      const double g1 = ga(rng), g2 = ga(rng);
      const double z = g1 / (g1 + g2);
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      const double u = uniform01(rng);
      if (kappa * w + pm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
  }
  w = std::clamp(w, -1.0, 1.0);
  Vec v;
  for (;;) {
    v = standard_normal(rng, p);
    v -= v.dot(mean) * mean;
    const double nv = v.norm();
    if (nv > 1e-12) {
      v /= nv;
      break;
    }
  }
  Vec x = w * mean + std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
  return x / x.norm();
}

std::vector<Vec> dataset_vmf_mixture(const std::vector<VmfMode>& modes, const std::vector<double>& weights, int n,
                                     Rng& rng) {
  if (modes.empty() || modes.size() != weights.size())
    throw std::invalid_argument("vmf mixture: need one weight per mode");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("vmf mixture: weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("vmf mixture: weights must sum to 1");
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<Vec> out;
  out.reserve(std::max(n, 0));
  for (int i = 0; i < n; ++i) {
    const auto& m = modes[pick(rng)];
    out.push_back(sample_vmf(m.mean, m.kappa, rng));
  }
  return out;
}

Mat nearest_rotation(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat U = svd.matrixU();
  const Mat V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(U.cols() - 1) = -U.col(U.cols() - 1);
  return U * V.transpose();
}

SonMixture dataset_son_mixture(int n, int m, double concentration, int n_samples, Rng& rng) {
  if (n < 2 || m < 1) throw std::invalid_argument("son mixture: need n >= 2 and m >= 1");
  if (!(concentration > 0.0)) throw std::invalid_argument("son mixture: concentration must be > 0");
  SonMixture out;
  for (int c = 0; c < m; ++c) out.centers.push_back(haar_rotation(n, rng));
  const double scale = 1.0 / std::sqrt(concentration);
  std::uniform_int_distribution<int> pick(0, m - 1);
  out.samples.reserve(std::max(n_samples, 0));
  for (int i = 0; i < n_samples; ++i) {
    const Mat& R = out.centers[pick(rng)];
    Mat A(n, n);
    for (int j = 0; j < n; ++j) A.col(j) = standard_normal(rng, n);
    out.samples.push_back(vec(nearest_rotation(R * (Mat::Identity(n, n) + scale * A))));
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_samples_csv(std::ostream& os, const std::vector<Vec>& samples, int dim) {
  for (int i = 0; i < dim; ++i) os << (i ? "," : "") << 'x' << i;
  os << '\n';
  char buf[32];
  for (const auto& x : samples) {
    if (x.size() != dim) throw DimensionMismatch("write_samples_csv: sample has wrong dimension");
    for (int i = 0; i < dim; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
}

std::vector<Vec> read_samples_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("samples csv: missing header");
  const auto dim = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<Vec> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Vec x(dim);
    std::stringstream ss(line);
    std::string cell;
    int i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= dim) throw Error("samples csv: too many columns");
      x[i++] = std::stod(cell);
    }
    if (i != dim) throw Error("samples csv: too few columns");
    out.push_back(std::move(x));
  }
  return out;
}

void save_samples_csv(const std::string& path, const std::vector<Vec>& samples, int dim) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  write_samples_csv(os, samples, dim);
}

std::vector<Vec> load_samples_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_samples_csv(is);
}

}  // namespace ldiff
