#include "cpwloss/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpwloss/error.hpp"

namespace cpwloss::lsq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd bound_or(const Eigen::VectorXd& v, Eigen::Index n, double fill) {
  if (v.size() == n) return v;
  return Eigen::VectorXd::Constant(n, fill);
}

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

Eigen::VectorXd typical_scale(const Options& options, const Eigen::VectorXd& x0) {
  if (options.typical.size() == x0.size()) return options.typical.cwiseAbs();
  Eigen::VectorXd typ(x0.size());
  for (Eigen::Index j = 0; j < x0.size(); ++j) typ[j] = x0[j] != 0.0 ? std::abs(x0[j]) : 1.0;
  return typ;
}

}  // namespace

void numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& r0, const Options& options,
                      Eigen::MatrixXd& jacobian) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = r0.size();
  const auto lo = bound_or(options.lower, n, -kInf);
  const auto hi = bound_or(options.upper, n, kInf);
  const auto typ = typical_scale(options, x);
  static const double step_factor = std::cbrt(std::numeric_limits<double>::epsilon());
  jacobian.resize(m, n);
  Eigen::VectorXd xp = x;
  Eigen::VectorXd rp(m), rm(m);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = step_factor * std::max(std::abs(x[j]), typ[j]);
    const bool room_up = x[j] + h <= hi[j];
    const bool room_down = x[j] - h >= lo[j];
    if (room_up && room_down) {
      xp[j] = x[j] + h;
      residuals(xp, rp);
      xp[j] = x[j] - h;
      residuals(xp, rm);
      jacobian.col(j) = (rp - rm) / (2.0 * h);
    } else if (room_up) {
      xp[j] = x[j] + h;
      residuals(xp, rp);
      jacobian.col(j) = (rp - r0) / h;
    } else {
      xp[j] = x[j] - h;
      residuals(xp, rm);
      jacobian.col(j) = (r0 - rm) / h;
    }
    xp[j] = x[j];
  }
}

Eigen::MatrixXd Result::normal_inverse() const {
  const Eigen::Index n = jacobian.cols();
  Eigen::VectorXd scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = jacobian.col(j).norm();
    scale[j] = norm > 0.0 ? 1.0 / norm : 0.0;
  }
  const Eigen::MatrixXd js = jacobian * scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(js, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-12 * sv[0] : 0.0;
  Eigen::VectorXd inv_sq(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    inv_sq[k] = sv[k] > cutoff ? 1.0 / (sv[k] * sv[k]) : 0.0;
  }
  const Eigen::MatrixXd inner = svd.matrixV() * inv_sq.asDiagonal() * svd.matrixV().transpose();
  return scale.asDiagonal() * inner * scale.asDiagonal();
}

double Result::residual_variance() const {
  const auto m = residuals.size();
  const auto n = params.size();
  return m > n ? residuals.squaredNorm() / static_cast<double>(m - n) : 0.0;
}

Eigen::VectorXd Result::standard_errors() const {
  return (normal_inverse().diagonal() * residual_variance()).cwiseMax(0.0).cwiseSqrt();
}

double Result::rms() const {
  return residuals.size() ? std::sqrt(residuals.squaredNorm() / residuals.size()) : 0.0;
}

Result levenberg_marquardt(const ResidualFn& residuals, Eigen::Index num_residuals,
                           Eigen::VectorXd x0, const Options& options,
                           const JacobianFn& jacobian_fn) {
  const Eigen::Index n = x0.size();
  const Eigen::Index m = num_residuals;
  const auto lo = bound_or(options.lower, n, -kInf);
  const auto hi = bound_or(options.upper, n, kInf);
  const auto typ = typical_scale(options, x0);

  Result out;
  Eigen::VectorXd x = clamp(x0, lo, hi);
  Eigen::VectorXd r(m);
  residuals(x, r);
  if (!r.allFinite()) throw FitError("non-finite residuals at the initial point");
  double cost = 0.5 * r.squaredNorm();

  Eigen::MatrixXd jac(m, n);
  const auto eval_jacobian = [&] {
    if (jacobian_fn) {
      jacobian_fn(x, jac);
    } else {
      numeric_jacobian(residuals, x, r, options, jac);
    }
  };
  eval_jacobian();

  double mu = -1.0;
  double nu = 2.0;
  Eigen::VectorXd diag_scale = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r_new(m);

  const auto finish = [&](bool converged, std::string message, int iterations) {
    out.params = x;
    out.residuals = r;
    out.jacobian = jac;
    out.cost = cost;
    out.iterations = iterations;
    out.converged = converged;
    out.message = std::move(message);
    return out;
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd g = jac.transpose() * r;
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const double rnorm = r.norm();

    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool pinned_low = x[j] <= lo[j] && g[j] > 0.0;
      const bool pinned_high = x[j] >= hi[j] && g[j] < 0.0;
      if (!pinned_low && !pinned_high) free.push_back(j);
    }
    if (rnorm == 0.0) return finish(true, "zero residual", iter);
    double gmax = 0.0;
    for (auto j : free) {
      if (a(j, j) > 0.0) gmax = std::max(gmax, std::abs(g[j]) / (std::sqrt(a(j, j)) * rnorm));
    }
    if (free.empty() || gmax <= options.gtol) return finish(true, "gradient tolerance", iter);

    for (Eigen::Index j = 0; j < n; ++j) diag_scale[j] = std::max(diag_scale[j], a(j, j));
    if (mu < 0.0) mu = 1e-3;

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd af(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index p = 0; p < nf; ++p) {
      gf[p] = g[free[p]];
      for (Eigen::Index q = 0; q < nf; ++q) af(p, q) = a(free[p], free[q]);
    }

    while (true) {
      Eigen::MatrixXd damped = af;
      for (Eigen::Index p = 0; p < nf; ++p) {
        damped(p, p) += mu * std::max(diag_scale[free[p]], 1e-300);
      }
      const Eigen::VectorXd hf = damped.ldlt().solve(-gf);
      Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
      for (Eigen::Index p = 0; p < nf; ++p) h[free[p]] = hf[p];
      const Eigen::VectorXd x_new = clamp(x + h, lo, hi);
      const Eigen::VectorXd step = x_new - x;

      bool small = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(step[j]) > options.xtol * (std::abs(x[j]) + typ[j])) small = false;
      }

      residuals(x_new, r_new);
      const double cost_new = r_new.allFinite() ? 0.5 * r_new.squaredNorm() : kInf;
      const double predicted = -(step.dot(g) + 0.5 * step.dot(a * step));
      const double actual = cost - cost_new;
      const double rho = predicted > 0.0 ? actual / predicted : (actual > 0.0 ? 1.0 : -1.0);

      if (std::isfinite(cost_new) && actual > 0.0 && rho > 1e-4) {
        const double relative = actual / cost;
        x = x_new;
        r = r_new;
        cost = cost_new;
        eval_jacobian();
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        if (small) return finish(true, "parameter step tolerance", iter + 1);
        if (relative <= options.ftol) return finish(true, "cost tolerance", iter + 1);
        break;
      }
      if (small) return finish(true, "parameter step tolerance", iter + 1);
      mu *= nu;
      nu *= 2.0;
      if (mu > 1e30) return finish(false, "damping overflow without progress", iter + 1);
    }
  }
  return finish(false, "iteration limit reached", options.max_iterations);
}

}  // namespace cpwloss::lsq
