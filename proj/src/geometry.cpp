#include "ldiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ldiff {

void ConstraintSet::validate() const {
  if (dim <= 0) throw std::invalid_argument("constraint set: dim must be positive");
  if (num_eq < 0 || num_ineq < 0) throw std::invalid_argument("constraint set: negative constraint count");
  if (num_eq > 0 && (!h || !grad_h)) throw std::invalid_argument("constraint set: h/grad_h missing");
  if (num_ineq > 0 && (!g || !grad_g)) throw std::invalid_argument("constraint set: g/grad_g missing");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("constraint set: epsilon must be >= 0");
  if (epsilon == 0.0 && num_ineq > 0)
    throw std::invalid_argument("constraint set: epsilon = 0 requires no inequality constraints");
  if (!(rank_tol > 0.0)) throw std::invalid_argument("constraint set: rank_tol must be positive");
}

std::vector<int> active_set(const ConstraintSet& cs, const Vec& x) {
  std::vector<int> active;
  if (cs.num_ineq == 0) return active;
  const Vec gx = cs.g(x);
  for (int j = 0; j < cs.num_ineq; ++j)
    if (gx[j] >= 0.0) active.push_back(j);
  return active;
}

namespace {

StackedConstraints stack_with(const ConstraintSet& cs, const Vec& x, const std::vector<int>& active, const Vec* gx) {
  const Eigen::Index m = cs.num_eq;
  const Eigen::Index rows = m + static_cast<Eigen::Index>(active.size());
  StackedConstraints out{Vec(rows), Mat(rows, cs.dim)};
  if (m > 0) {
    out.J.head(m) = cs.h(x);
    out.gradJ.topRows(m) = cs.grad_h(x);
  }
  if (!active.empty()) {
    const Mat dg = cs.grad_g(x);
    for (std::size_t a = 0; a < active.size(); ++a) {
      out.J[m + a] = (*gx)[active[a]] + cs.epsilon;
      out.gradJ.row(m + a) = dg.row(active[a]);
    }
  }
  return out;
}

}  // namespace

StackedConstraints stacked_constraints(const ConstraintSet& cs, const Vec& x) {
  const auto active = active_set(cs, x);
  Vec gx;
  if (!active.empty()) gx = cs.g(x);
  return stack_with(cs, x, active, &gx);
}

GeometryCache geometry_at(const ConstraintSet& cs, const Vec& x) {
  GeometryCache c;
  c.x = x;
  Vec gx;
  if (cs.num_ineq > 0) {
    gx = cs.g(x);
    for (int j = 0; j < cs.num_ineq; ++j)
      if (gx[j] >= 0.0) c.active.push_back(j);
  }
  auto stacked = stack_with(cs, x, c.active, &gx);
  c.J = std::move(stacked.J);
  c.gradJ = std::move(stacked.gradJ);

  const Eigen::Index d = cs.dim;
  const Eigen::Index r = c.J.size();
  if (r == 0) {
    c.gram_pinv.resize(0, 0);
    c.proj = Mat::Identity(d, d);
    c.rank = 0;
    return c;
  }

  // Pseudo-inverse of G = gradJ gradJ^T through the SVD of gradJ itself:
  // G^+ = U S^-2 U^T and Pi = I - V V^T on the retained singular triplets.
  Eigen::JacobiSVD<Mat> svd(c.gradJ, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  int rank = 0;
  if (smax > 0.0)
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] > cs.rank_tol * smax) ++rank;
  c.rank = rank;

  const Mat U = svd.matrixU().leftCols(rank);
  const Mat V = svd.matrixV().leftCols(rank);
  const Vec inv_s2 = s.head(rank).array().square().inverse().matrix();
  c.gram_pinv = U * inv_s2.asDiagonal() * U.transpose();
  c.proj = Mat::Identity(d, d) - V * V.transpose();
  return c;
}

Vec landing_direction(const GeometryCache& cache) {
  if (cache.rows() == 0) return Vec::Zero(cache.x.size());
  return cache.gradJ.transpose() * (cache.gram_pinv * cache.J);
}

std::vector<Mat> stacked_hessians(const GeometryCache& cache, const ConstraintSet& cs) {
  if (!cs.has_hessians()) throw MissingHessian();
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(cache.rows()));
  if (cs.num_eq > 0) {
    auto hh = cs.hess_h(cache.x);
    for (auto& H : hh) out.push_back(std::move(H));
  }
  if (!cache.active.empty()) {
    const auto hg = cs.hess_g(cache.x);
    for (int j : cache.active) out.push_back(hg[static_cast<std::size_t>(j)]);
  }
  return out;
}

Vec mean_curvature(const GeometryCache& cache, const ConstraintSet& cs) {
  if (!cs.has_hessians()) throw MissingHessian();
  const Eigen::Index d = cache.x.size();
  if (cache.rows() == 0) return Vec::Zero(d);
  const auto H = stacked_hessians(cache, cs);
  Vec traces(cache.rows());
  for (Eigen::Index i = 0; i < cache.rows(); ++i) traces[i] = H[static_cast<std::size_t>(i)].cwiseProduct(cache.proj).sum();
  return -(cache.gradJ.transpose() * (cache.gram_pinv * traces));
}

Vec curvature_H1(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p) {
  if (!cs.has_hessians()) throw MissingHessian();
  if (cache.rows() == 0) return Vec();
  const auto H = stacked_hessians(cache, cs);
  Vec out(cache.rows());
  for (Eigen::Index i = 0; i < cache.rows(); ++i) out[i] = p.dot(H[static_cast<std::size_t>(i)] * p);
  return out;
}

Mat curvature_H2(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p) {
  if (!cs.has_hessians()) throw MissingHessian();
  const Eigen::Index r = cache.rows();
  if (r == 0) return Mat(0, 0);
  const auto H = stacked_hessians(cache, cs);
  const Mat W = cache.gradJ.transpose() * cache.gram_pinv;  // d x r
  Mat out(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Vec Hp = H[static_cast<std::size_t>(i)] * p;  // symmetric Hessian
    out.row(i) = (Hp.transpose() * W).cwiseProduct(cache.J.transpose());
  }
  return out;
}

Vec curvature_H2_collapsed(const GeometryCache& cache, const ConstraintSet& cs, const Vec& p) {
  if (!cs.has_hessians()) throw MissingHessian();
  if (cache.rows() == 0) return Vec();
  const auto H = stacked_hessians(cache, cs);
  const Vec lift = landing_direction(cache);
  Vec out(cache.rows());
  for (Eigen::Index i = 0; i < cache.rows(); ++i) out[i] = p.dot(H[static_cast<std::size_t>(i)] * lift);
  return out;
}

namespace {

bool inequalities_ok(const ConstraintSet& cs, const Vec& x, double tol) {
  if (cs.num_ineq == 0) return true;
  return cs.g(x).maxCoeff() <= tol;
}

Mat pinv(const Mat& A, double rank_tol) {
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  Vec inv = Vec::Zero(s.size());
  if (smax > 0.0)
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] > rank_tol * smax) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

NewtonResult newton_project(const ConstraintSet& cs, const Vec& x0, const Vec& anchor, const NewtonOptions& opts) {
  if (!x0.allFinite() || !anchor.allFinite()) throw ProjectionFailure(0, std::numeric_limits<double>::infinity());
  NewtonResult res{x0, 0, 0.0};
  if (cs.num_eq == 0) {
    if (opts.check_inequalities && !inequalities_ok(cs, x0, opts.tol)) throw ProjectionFailure(0, cs.g(x0).maxCoeff());
    return res;
  }

  Vec r = cs.h(x0);
  res.residual = r.lpNorm<Eigen::Infinity>();
  if (res.residual <= opts.tol) {
    if (opts.check_inequalities && !inequalities_ok(cs, x0, opts.tol)) throw ProjectionFailure(0, cs.g(x0).maxCoeff());
    return res;
  }

  const Mat A = cs.grad_h(anchor);  // m x d, frozen correction directions
  Vec lambda = Vec::Zero(cs.num_eq);
  Vec x = x0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Mat jac = cs.grad_h(x) * A.transpose();
    const Vec delta = -(pinv(jac, cs.rank_tol) * r);
    if (!delta.allFinite() || delta.squaredNorm() == 0.0) throw ProjectionFailure(it, res.residual);

    const double rnorm = r.norm();
    double t = 1.0;
    bool accepted = false;
    Vec x_new, r_new;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, t *= 0.5) {
      x_new = x0 + A.transpose() * (lambda + t * delta);
      r_new = cs.h(x_new);
      if (r_new.allFinite() && r_new.norm() < rnorm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw ProjectionFailure(it, res.residual);

    lambda += t * delta;
    x = std::move(x_new);
    r = std::move(r_new);
    res.residual = r.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (res.residual <= opts.tol) {
      if (opts.check_inequalities && !inequalities_ok(cs, x, opts.tol)) throw ProjectionFailure(it, cs.g(x).maxCoeff());
      res.x = std::move(x);
      return res;
    }
  }
  throw ProjectionFailure(opts.max_iter, res.residual);
}

// ---------------------------------------------------------------------------

namespace {

double rel_err(const Mat& approx, const Mat& exact) {
  const double scale = std::max(exact.norm(), 1e-8);
  return (approx - exact).norm() / scale;
}

Mat fd_jacobian(const VecField& f, const Vec& x, Eigen::Index rows, double rel_step) {
  Mat out(rows, x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double e = rel_step * std::max(1.0, std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += e;
    xm[i] -= e;
    out.col(i) = (f(xp) - f(xm)) / (2.0 * e);
  }
  return out;
}

}  // namespace

double gradient_fd_error(const ConstraintSet& cs, const Vec& x, double rel_step) {
  double err = 0.0;
  if (cs.num_eq > 0) err = std::max(err, rel_err(fd_jacobian(cs.h, x, cs.num_eq, rel_step), cs.grad_h(x)));
  if (cs.num_ineq > 0) err = std::max(err, rel_err(fd_jacobian(cs.g, x, cs.num_ineq, rel_step), cs.grad_g(x)));
  return err;
}

double hessian_fd_error(const ConstraintSet& cs, const Vec& x, double rel_step) {
  if (!cs.has_hessians()) throw MissingHessian();
  double err = 0.0;
  auto check = [&](const JacobianField& grad, const HessianField& hess, int count) {
    const auto H = hess(x);
    for (int i = 0; i < count; ++i) {
      VecField row = [&, i](const Vec& y) -> Vec { return grad(y).row(i).transpose(); };
      err = std::max(err, rel_err(fd_jacobian(row, x, x.size(), rel_step), H[static_cast<std::size_t>(i)]));
    }
  };
  if (cs.num_eq > 0) check(cs.grad_h, cs.hess_h, cs.num_eq);
  if (cs.num_ineq > 0) check(cs.grad_g, cs.hess_g, cs.num_ineq);
  return err;
}

}  // namespace ldiff
