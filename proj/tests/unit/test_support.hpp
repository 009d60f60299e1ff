#pragma once

#include "ldiff/geometry.hpp"
#include "ldiff/random.hpp"
#include "ldiff/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ldiff::testing {

/// Every built-in task at a small size.
inline std::vector<TaskSpec> builtin_tasks() {
  return {make_sphere(3), make_sphere(5), make_son(3), make_disk(2), make_disk(4), make_sphere_cap(0.5)};
}

/// A feasible point pushed off the manifold by Gaussian noise of scale `spread`.
inline Vec near_point(const TaskSpec& task, Rng& rng, double spread = 0.2) {
  Vec x = sample_uniform(task, rng);
  return x + spread * standard_normal(rng, x.size());
}

/// Hessians of the stacked rows by central differences of the supplied gradients.
inline std::vector<Mat> fd_stacked_hessians(const ConstraintSet& cs, const GeometryCache& c, double step = 1e-5) {
  const int d = cs.dim;
  std::vector<Mat> H(c.rows(), Mat::Zero(d, d));
  auto rows_at = [&](const Vec& y) {
    Mat G(c.rows(), d);
    int r = 0;
    if (cs.num_eq > 0) {
      G.topRows(cs.num_eq) = cs.grad_h(y);
      r = cs.num_eq;
    }
    if (!c.active.empty()) {
      const Mat gg = cs.grad_g(y);
      for (int j : c.active) G.row(r++) = gg.row(j);
    }
    return G;
  };
  for (int a = 0; a < d; ++a) {
    const double h = step * std::max(1.0, std::abs(c.x[a]));
    Vec xp = c.x, xm = c.x;
    xp[a] += h;
    xm[a] -= h;
    const Mat D = (rows_at(xp) - rows_at(xm)) / (2 * h);
    for (Eigen::Index i = 0; i < c.rows(); ++i) H[i].col(a) = D.row(i).transpose();
  }
  for (auto& m : H) m = 0.5 * (m + m.transpose()).eval();
  return H;
}

inline double rel_diff(const Mat& a, const Mat& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

}  // namespace ldiff::testing
