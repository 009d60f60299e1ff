#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ldiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Curvature terms were requested on a constraint set without Hessians.
class MissingHessian : public Error {
 public:
  MissingHessian() : Error("constraint set has no Hessians; curvature terms unavailable") {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A chain produced NaN/Inf. `step` is the index of the offending step (-1 if unknown).
class NonFiniteState : public Error {
 public:
  explicit NonFiniteState(int step, const std::string& where = "")
      : Error("non-finite state at step " + std::to_string(step) + (where.empty() ? "" : " (" + where + ")")),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Newton projection onto the feasible set did not converge.
class ProjectionFailure : public Error {
 public:
  ProjectionFailure(int iterations, double residual, int step = -1)
      : Error("projection failed after " + std::to_string(iterations) + " iterations, residual " +
              std::to_string(residual) + (step >= 0 ? " at step " + std::to_string(step) : "")),
        iterations_(iterations),
        residual_(residual),
        step_(step) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }
  int step() const { return step_; }
  ProjectionFailure at_step(int step) const { return ProjectionFailure(iterations_, residual_, step); }

 private:
  int iterations_;
  double residual_;
  int step_;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace ldiff
