#pragma once

// Box-constrained Levenberg-Marquardt for small dense problems.
//
// The damping uses Marquardt's diagonal scaling, so the iteration is invariant
// to per-parameter rescaling. Bounds are handled by projection with an active
// set: parameters pinned at a bound with the gradient pushing outward are
// frozen for that step.

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace cpwloss::lsq {

/// Fills `residuals` (pre-sized to the problem's residual count) for `params`.
using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

/// Optional analytic Jacobian; when empty, central differences are used.
using JacobianFn = std::function<void(const Eigen::VectorXd& params, Eigen::MatrixXd& jacobian)>;

struct Options {
  int max_iterations = 200;
  double xtol = 1e-10;  // relative parameter step
  double ftol = 1e-15;  // relative cost reduction
  double gtol = 1e-12;  // scaled gradient cosine
  Eigen::VectorXd lower;  // empty = unbounded
  Eigen::VectorXd upper;
  Eigen::VectorXd typical;  // finite-difference and xtol scale, empty = |x|
};

struct Result {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
  std::string message;

  /// (J^T J)^+ at the solution; multiply by residual_variance() for the
  /// parameter covariance.
  Eigen::MatrixXd normal_inverse() const;
  /// |r|^2 / (m - n), or 0 when the problem is not over-determined.
  double residual_variance() const;
  /// Standard errors: sqrt(diag(covariance)).
  Eigen::VectorXd standard_errors() const;
  double rms() const;
};

Result levenberg_marquardt(const ResidualFn& residuals, Eigen::Index num_residuals,
                           Eigen::VectorXd x0, const Options& options = {},
                           const JacobianFn& jacobian = {});

/// Central-difference Jacobian honouring bounds (one-sided at a bound).
void numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& r0, const Options& options,
                      Eigen::MatrixXd& jacobian);

}  // namespace cpwloss::lsq
