#pragma once

#include "ldiff/types.hpp"

#include <functional>
#include <vector>

namespace ldiff {

using VecField = std::function<Vec(const Vec&)>;
using JacobianField = std::function<Mat(const Vec&)>;
/// One d x d Hessian per constraint row.
using HessianField = std::function<std::vector<Mat>(const Vec&)>;

/// Feasible set {x : h(x) = 0, g(x) <= 0} together with the first (and
/// optionally second) derivatives of its constraint functions.
///
/// `grad_f` is the gradient of the target potential; empty means f == 0.
struct ConstraintSet {
  int dim = 0;
  int num_eq = 0;    // m
  int num_ineq = 0;  // l

  VecField h;
  VecField g;
  JacobianField grad_h;
  JacobianField grad_g;
  HessianField hess_h;
  HessianField hess_g;
  VecField grad_f;

  double epsilon = 0.0;
  double rank_tol = 1e-8;

  bool has_hessians() const {
    return (num_eq == 0 || static_cast<bool>(hess_h)) && (num_ineq == 0 || static_cast<bool>(hess_g));
  }

  Vec eval_h(const Vec& x) const { return num_eq > 0 ? h(x) : Vec(); }
  Vec eval_g(const Vec& x) const { return num_ineq > 0 ? g(x) : Vec(); }
  Vec eval_grad_f(const Vec& x) const { return grad_f ? grad_f(x) : Vec::Zero(x.size()); }

  /// Throws std::invalid_argument when the invariants on dim/epsilon/rank_tol fail.
  void validate() const;
};

/// Everything the kernels need at one point: active set, stacked constraints,
/// Gram pseudo-inverse and tangent projector.
struct GeometryCache {
  Vec x;
  std::vector<int> active;  // ascending inequality indices with g_j(x) >= 0
  Vec J;                    // [h(x); g_active(x) + eps]
  Mat gradJ;                // (m + |active|) x d
  Mat gram_pinv;            // (gradJ gradJ^T)^+
  Mat proj;                 // I - gradJ^T G^+ gradJ
  int rank = 0;

  Eigen::Index rows() const { return J.size(); }
};

std::vector<int> active_set(const ConstraintSet& cs, const Vec& x);

struct StackedConstraints {
  Vec J;
  Mat gradJ;
};

StackedConstraints stacked_constraints(const ConstraintSet& cs, const Vec& x);

GeometryCache geometry_at(const ConstraintSet& cs, const Vec& x);

/// gradJ^T G^+ J, the unscaled landing direction.
Vec landing_direction(const GeometryCache& cache);

/// Hessians of the stacked rows, in stack order.
std::vector<Mat> stacked_hessians(const GeometryCache& cache, const ConstraintSet& cs);

/// Mean curvature correction -gradJ^T G^+ [tr(hess J_i * Pi)]_i.
Vec mean_curvature(const GeometryCache& cache, const ConstraintSet& cs);

/// [p^T hess J_i p]_i.
Vec curvature_H1(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p);

/// Matrix form of the landing-curvature correction. Entry (i, j) is
/// p^T hess J_i (gradJ^T G^+)_{:, j} J_j, so column j carries the
/// contribution of constraint j and row sums give
/// [p^T hess J_i (gradJ^T G^+ J)]_i. Vanishes when J = 0 or p = 0.
Mat curvature_H2(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p);

/// Row sums of curvature_H2; this is the vector that enters the drift.
Vec curvature_H2_collapsed(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p);

struct NewtonOptions {
  int max_iter = 50;
  double tol = 1e-10;
  int max_halvings = 20;
  /// Also require g <= tol at the solution.
  bool check_inequalities = true;
};

struct NewtonResult {
  Vec x;
  int iterations = 0;
  double residual = 0.0;
};

/// Projects x0 onto {h = 0} along the rows of grad_h(anchor):
/// x = x0 + grad_h(anchor)^T lambda, with lambda found by damped Newton
/// iteration. Inequalities are checked (g <= tol) after convergence.
/// Throws ProjectionFailure.
NewtonResult newton_project(const ConstraintSet& cs, const Vec& x0, const Vec& anchor, const NewtonOptions& opts = {});

// ---------------------------------------------------------------------------
// Validation helpers (central finite differences)
// ---------------------------------------------------------------------------

/// Max relative error of grad_h/grad_g against central differences at x.
double gradient_fd_error(const ConstraintSet& cs, const Vec& x, double rel_step = 1e-5);

/// Max relative error of the supplied Hessians against central differences of
/// the supplied gradients at x.
double hessian_fd_error(const ConstraintSet& cs, const Vec& x, double rel_step = 1e-5);

}  // namespace ldiff
