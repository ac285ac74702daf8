#include <gtest/gtest.h>

#include <cmath>

#include "cpwloss/least_squares.hpp"

namespace cpwloss::lsq {
namespace {

TEST(LevenbergMarquardt, RosenbrockConverges) {
  const ResidualFn f = [](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r[0] = 10.0 * (x[1] - x[0] * x[0]);
    r[1] = 1.0 - x[0];
  };
  const auto result = levenberg_marquardt(f, 2, Eigen::Vector2d(-1.2, 1.0));
  ASSERT_TRUE(result.converged) << result.message;
  EXPECT_NEAR(result.params[0], 1.0, 1e-8);
  EXPECT_NEAR(result.params[1], 1.0, 1e-8);
}

TEST(LevenbergMarquardt, RespectsBounds) {
  // Unconstrained minimum at x = -2; the lower bound 0 must hold.
  const ResidualFn f = [](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r[0] = x[0] + 2.0;
    r[1] = x[1] - 3.0;
  };
  Options options;
  options.lower = Eigen::Vector2d(0.0, -10.0);
  options.upper = Eigen::Vector2d(10.0, 10.0);
  const auto result = levenberg_marquardt(f, 2, Eigen::Vector2d(5.0, 0.0), options);
  ASSERT_TRUE(result.converged) << result.message;
  EXPECT_EQ(result.params[0], 0.0);
  EXPECT_NEAR(result.params[1], 3.0, 1e-8);  // xtol-limited
}

TEST(LevenbergMarquardt, LinearRegressionStandardErrors) {
  // y = 2 + 3 t with alternating +-0.1 residuals: compare with the closed-form
  // OLS covariance s^2 (X^T X)^-1.
  const int m = 10;
  Eigen::VectorXd t(m), y(m);
  for (int i = 0; i < m; ++i) {
    t[i] = i;
    y[i] = 2.0 + 3.0 * i + (i % 2 ? 0.1 : -0.1);
  }
  const ResidualFn f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r = (x[0] + x[1] * t.array()).matrix() - y;
  };
  const auto result = levenberg_marquardt(f, m, Eigen::Vector2d(0.0, 0.0));
  ASSERT_TRUE(result.converged);
  Eigen::MatrixXd design(m, 2);
  design.col(0).setOnes();
  design.col(1) = t;
  const Eigen::Vector2d beta = design.colPivHouseholderQr().solve(y);
  const double s2 = (design * beta - y).squaredNorm() / (m - 2);
  const Eigen::Matrix2d cov = s2 * (design.transpose() * design).inverse();
  const auto se = result.standard_errors();
  EXPECT_NEAR(result.params[0], beta[0], 1e-9);
  EXPECT_NEAR(result.params[1], beta[1], 1e-9);
  EXPECT_NEAR(se[0], std::sqrt(cov(0, 0)), 1e-9);
  EXPECT_NEAR(se[1], std::sqrt(cov(1, 1)), 1e-9);
}

TEST(LevenbergMarquardt, ReportsIterationLimit) {
  const ResidualFn f = [](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    r[0] = 10.0 * (x[1] - x[0] * x[0]);
    r[1] = 1.0 - x[0];
  };
  Options options;
  options.max_iterations = 2;
  const auto result = levenberg_marquardt(f, 2, Eigen::Vector2d(-1.2, 1.0), options);
  EXPECT_FALSE(result.converged);
}

}  // namespace
}  // namespace cpwloss::lsq
