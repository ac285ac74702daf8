#include "cpwloss/resonance_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "cpwloss/error.hpp"
#include "cpwloss/least_squares.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {

using units::kPi;
using units::kTwoPi;

namespace {

double wrap_angle(double angle) { return std::remainder(angle, kTwoPi); }

std::vector<double> unwrapped_phase(std::span<const Complex> points, Complex origin = {}) {
  std::vector<double> phase(points.size());
  double offset = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double raw = std::arg(points[i] - origin);
    if (i > 0) {
      const double jump = raw + offset - phase[i - 1];
      offset -= kTwoPi * std::round(jump / kTwoPi);
    }
    phase[i] = raw + offset;
  }
  return phase;
}

ComplexTrace apply_delay(const ComplexTrace& trace, double tau) {
  ComplexTrace out = trace;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out.s21[i] = trace.s21[i] * std::polar(1.0, kTwoPi * trace.frequencies[i] * tau);
  }
  return out;
}

struct CircleQuality {
  double rms = std::numeric_limits<double>::infinity();  // absolute radial RMS
  double relative = std::numeric_limits<double>::infinity();  // rms / radius
};

CircleQuality circle_quality(const ComplexTrace& trace, double tau) {
  const auto corrected = apply_delay(trace, tau);
  try {
    const auto circle = fit_circle(corrected.s21);
    // A physical resonance circle never encloses the origin; a delay that
    // wraps a flat trace around it is not a resonance.
    if (std::abs(circle.center) < 0.5 * circle.radius) return {};
    return {circle.rms_residual, circle.rms_residual / circle.radius};
  } catch (const Error&) {
    return {};
  }
}

// Fraction of 32 equal angular sectors around `center` that hold a point. A
// resonance sweeps most of the way round its circle; a noise blob does not.
double angular_coverage(std::span<const Complex> points, Complex center) {
  constexpr int kSectors = 32;
  std::array<bool, kSectors> hit{};
  for (const auto& z : points) {
    const double u = (std::arg(z - center) + kPi) / kTwoPi;
    hit[static_cast<std::size_t>(std::clamp(static_cast<int>(u * kSectors), 0, kSectors - 1))] = true;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) / kSectors;
}

// Golden-section search for a minimum of `fn` on [lo, hi].
template <typename Fn>
double golden_minimize(Fn&& fn, double lo, double hi, int iterations) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - ratio * (hi - lo);
  double d = lo + ratio * (hi - lo);
  double fc = fn(c);
  double fd = fn(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = fn(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = fn(d);
    }
  }
  return fc < fd ? c : d;
}

// Frequency at which `values` (monotone on average) crosses `level`, by linear
// interpolation at the crossing closest to `near_index`.
std::optional<double> crossing(std::span<const double> freqs, std::span<const double> values,
                               double level, std::size_t near_index) {
  std::optional<double> best;
  std::size_t best_distance = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double v0 = values[i] - level;
    const double v1 = values[i + 1] - level;
    if ((v0 <= 0.0 && v1 > 0.0) || (v0 >= 0.0 && v1 < 0.0)) {
      const double t = v0 / (v0 - v1);
      const double f = freqs[i] + t * (freqs[i + 1] - freqs[i]);
      const std::size_t distance = i > near_index ? i - near_index : near_index - i;
      if (!best || distance < best_distance) {
        best = f;
        best_distance = distance;
      }
    }
  }
  return best;
}

NotchModelParams staged_params(const PhaseFit& phase, const Circle2D& circle, double a,
                               double alpha, double tau) {
  const Complex off_resonant = std::polar(a, alpha);
  const Complex center = circle.center / off_resonant;
  const double radius = circle.radius / a;
  NotchModelParams p;
  p.fr = phase.fr;
  p.ql = phase.ql;
  p.qc_mag = phase.ql / (2.0 * radius);
  p.phi = std::arg(1.0 - center);
  p.a = a;
  p.alpha = alpha;
  p.tau = tau;
  return p;
}

}  // namespace

void check_physical(const NotchModelParams& p) {
  if (!(p.fr > 0.0)) throw ValidationError("notch model: fr must be positive");
  if (!(p.ql > 0.0)) throw ValidationError("notch model: Ql must be positive");
  if (!(p.qc_mag > 0.0)) throw ValidationError("notch model: |Qc| must be positive");
  if (!(std::abs(p.phi) < kPi / 2)) throw ValidationError("notch model: |phi| must be < pi/2");
  if (!(p.a > 0.0)) throw ValidationError("notch model: a must be positive");
  if (p.ql * std::cos(p.phi) > p.qc_mag * (1.0 + 1e-12)) {
    throw ValidationError("notch model: Ql > |Qc|/cos(phi) implies negative Qi");
  }
}

Complex notch_model(const NotchModelParams& p, double f) {
  const Complex environment =
      std::polar(p.a, p.alpha) * std::polar(1.0, -kTwoPi * f * p.tau);
  const Complex lorentz = 1.0 / Complex(1.0, 2.0 * p.ql * (f / p.fr - 1.0));
  return environment * (1.0 - (p.ql / p.qc_mag) * std::polar(1.0, p.phi) * lorentz);
}

ComplexTrace synthesize_notch(const NotchModelParams& params, std::span<const double> frequencies,
                              double noise_sigma, std::uint64_t seed) {
  check_physical(params);
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
  ComplexTrace trace;
  trace.frequencies.assign(frequencies.begin(), frequencies.end());
  trace.s21.resize(frequencies.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    trace.s21[i] = notch_model(params, frequencies[i]);
    if (noise_sigma > 0.0) {
      const double re = noise(rng);
      const double im = noise(rng);
      trace.s21[i] += noise_sigma * Complex(re, im);
    }
  }
  return trace;
}

std::vector<double> linewidth_grid(double fr, double ql, double half_span_linewidths,
                                   std::size_t count) {
  const double half = half_span_linewidths * fr / ql;
  std::vector<double> f(count);
  for (std::size_t i = 0; i < count; ++i) {
    f[i] = fr - half + 2.0 * half * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return f;
}

Circle2D fit_circle(std::span<const Complex> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 4) throw FitError("circle fit needs at least 4 points, got " + std::to_string(n));

  Complex centroid{};
  for (const auto& z : points) centroid += z;
  centroid /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& z : points) scale += std::norm(z - centroid);
  scale = std::sqrt(scale / static_cast<double>(n));
  if (!(scale > 0.0)) throw FitError("circle fit: degenerate (coincident) points");

  Eigen::MatrixXd design(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex z = (points[static_cast<std::size_t>(i)] - centroid) / scale;
    design(i, 0) = std::norm(z);
    design(i, 1) = z.real();
    design(i, 2) = z.imag();
    design(i, 3) = 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::Vector4d coeffs;
  if (sv[3] / sv[0] < 1e-12) {
    coeffs = v.col(3);
  } else {
    const Eigen::RowVector4d mean = design.colwise().mean();
    Eigen::Matrix4d constraint;
    constraint << 8.0 * mean[0], 4.0 * mean[1], 4.0 * mean[2], 2.0,  //
        4.0 * mean[1], 1.0, 0.0, 0.0,                                //
        4.0 * mean[2], 0.0, 1.0, 0.0,                                //
        2.0, 0.0, 0.0, 0.0;
    const Eigen::Matrix4d w = v * sv.asDiagonal() * v.transpose();
    const Eigen::Matrix4d m = w * constraint.inverse() * w;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(0.5 * (m + m.transpose()));
    // Exactly one eigenvalue is negative; the solution is the smallest positive.
    const Eigen::Vector4d astar = eig.eigenvectors().col(1);
    coeffs = w.ldlt().solve(astar);
  }
  const double a = coeffs[0];
  const double b = coeffs[1];
  const double c = coeffs[2];
  const double d = coeffs[3];
  const double disc = b * b + c * c - 4.0 * a * d;
  if (std::abs(a) < 1e-12 * coeffs.norm() || !(disc > 0.0)) {
    throw FitError("circle fit: points are collinear or degenerate");
  }
  const double radius = std::sqrt(disc) / std::abs(a) / 2.0;
  if (radius > 1e8) throw FitError("circle fit: points are collinear or degenerate");

  Circle2D circle;
  circle.center = centroid + scale * Complex(-b / a / 2.0, -c / a / 2.0);
  circle.radius = scale * radius;
  circle.num_points = points.size();
  double sum = 0.0;
  for (const auto& z : points) {
    const double dr = std::abs(z - circle.center) - circle.radius;
    sum += dr * dr;
  }
  circle.rms_residual = std::sqrt(sum / static_cast<double>(n));
  return circle;
}

DelayEstimate remove_cable_delay(const ComplexTrace& trace) {
  const std::size_t n = trace.size();
  const std::size_t edge = std::max<std::size_t>(n / 10, 3);
  if (n < 20 || 2 * edge >= n) {
    throw FitError("trace too narrow to estimate delay: " + std::to_string(n) + " points");
  }
  const auto phase = unwrapped_phase(trace.s21);
  const double f_mid = 0.5 * (trace.frequencies.front() + trace.frequencies.back());
  const double span = trace.frequencies.back() - trace.frequencies.front();

  // Common slope, separate intercept per edge.
  Eigen::MatrixXd design(2 * edge, 3);
  Eigen::VectorXd rhs(2 * edge);
  for (std::size_t k = 0; k < edge; ++k) {
    const std::size_t lo = k;
    const std::size_t hi = n - edge + k;
    design.row(static_cast<Eigen::Index>(k)) << (trace.frequencies[lo] - f_mid) / span, 1.0, 0.0;
    design.row(static_cast<Eigen::Index>(edge + k)) << (trace.frequencies[hi] - f_mid) / span, 0.0,
        1.0;
    rhs[static_cast<Eigen::Index>(k)] = phase[lo];
    rhs[static_cast<Eigen::Index>(edge + k)] = phase[hi];
  }
  const Eigen::Vector3d beta = design.colPivHouseholderQr().solve(rhs);
  const Eigen::VectorXd resid = design * beta - rhs;
  const double dof = std::max<double>(1.0, static_cast<double>(2 * edge) - 3.0);
  const double s2 = resid.squaredNorm() / dof;
  const Eigen::Matrix3d cov = s2 * (design.transpose() * design).inverse();
  const double slope = beta[0] / span;  // rad / Hz
  const double tau0 = -slope / kTwoPi;
  const double tau0_stderr = std::sqrt(std::max(cov(0, 0), 0.0)) / span / kTwoPi;

  // The edge phase is still bent by the resonance tails; refine tau so the
  // corrected data are as close to a circle as possible.
  const double window = 1.0 / (kTwoPi * span) + 3.0 * tau0_stderr;
  const int grid = 80;
  double best_tau = tau0;
  // Absolute RMS is the objective: rms/r alone rewards nearly straight arcs
  // with enormous radii.
  const auto objective = [&](double t) { return circle_quality(trace, t).rms; };
  double best_value = objective(tau0);
  for (int k = 0; k <= grid; ++k) {
    const double t = tau0 - window + 2.0 * window * k / grid;
    const double value = objective(t);
    if (value < best_value) {
      best_value = value;
      best_tau = t;
    }
  }
  const double cell = 2.0 * window / grid;
  const double tau = golden_minimize(objective, best_tau - cell, best_tau + cell, 60);
  const auto quality = circle_quality(trace, tau);
  const auto corrected = apply_delay(trace, tau);
  if (!std::isfinite(quality.relative) || quality.relative > 0.3 ||
      angular_coverage(corrected.s21, fit_circle(corrected.s21).center) < 0.5) {
    throw FitError("no resonance circle found while estimating the cable delay");
  }

  DelayEstimate out;
  out.tau = tau;
  out.tau_stderr = tau0_stderr;
  out.corrected = corrected;
  return out;
}

PhaseFit fit_phase(const ComplexTrace& corrected, const Circle2D& circle) {
  const std::size_t n = corrected.size();
  if (n < 4) throw FitError("phase fit needs at least 4 points");
  const auto& f = corrected.frequencies;
  const auto theta = unwrapped_phase(corrected.s21, circle.center);

  // Initial guesses: the phase sweeps theta0 + pi -> theta0 - pi, so the mid
  // level marks fr and the +-pi/2 levels mark the half-width points.
  const double mid = 0.5 * (theta.front() + theta.back());
  std::size_t steepest = 0;
  {
    double best = -1.0;
    const std::size_t w = std::max<std::size_t>(1, n / 100);
    for (std::size_t i = w; i + w < n; ++i) {
      const double slope = std::abs(theta[i + w] - theta[i - w]);
      if (slope > best) {
        best = slope;
        steepest = i;
      }
    }
  }
  const double fr0 = crossing(f, theta, mid, steepest).value_or(f[steepest]);
  const double direction = theta.back() < theta.front() ? 1.0 : -1.0;
  const auto upper = crossing(f, theta, mid - direction * kPi / 2, steepest);
  const auto lower = crossing(f, theta, mid + direction * kPi / 2, steepest);
  double ql0 = 0.0;
  if (upper && lower && *upper != *lower) {
    ql0 = fr0 / std::abs(*upper - *lower);
  } else {
    const double span = f.back() - f.front();
    ql0 = 4.0 * fr0 / span;
  }

  // Internal parameters: theta0, Ql / ql0, and the fr offset in half-widths.
  const double half_width = fr0 / (2.0 * ql0);
  const auto unpack = [&](const Eigen::VectorXd& x) {
    return std::array<double, 3>{x[0], x[1] * ql0, fr0 + x[2] * half_width};
  };
  const lsq::ResidualFn residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const auto [theta0, ql, fr] = unpack(x);
    for (std::size_t i = 0; i < n; ++i) {
      const double model = theta0 + 2.0 * std::atan(2.0 * ql * (1.0 - f[i] / fr));
      r[static_cast<Eigen::Index>(i)] = theta[i] - model;
    }
  };
  lsq::Options options;
  options.lower = Eigen::Vector3d(-1e6, 1e-6, -1e9);
  options.typical = Eigen::Vector3d(1.0, 1.0, 1.0);
  const auto result =
      lsq::levenberg_marquardt(residuals, static_cast<Eigen::Index>(n), Eigen::Vector3d(mid, 1.0, 0.0),
                               options);
  if (!result.converged) throw FitError("phase fit did not converge: " + result.message);
  const auto [theta0, ql, fr] = unpack(result.params);
  if (!(fr >= f.front() && fr <= f.back())) {
    throw FitError("phase fit placed fr outside the trace span");
  }
  const auto se = result.standard_errors();
  PhaseFit out;
  out.fr = fr;
  out.ql = ql;
  out.theta0 = wrap_angle(theta0);
  out.theta0_stderr = se[0];
  out.ql_stderr = se[1] * ql0;
  out.fr_stderr = se[2] * half_width;
  out.iterations = result.iterations;
  return out;
}

Complex off_resonant_point(const Circle2D& circle, double theta0) {
  return circle.center - std::polar(circle.radius, theta0);
}

ResonatorFitResult extract_quality_factors(const PhaseFit& phase, const Circle2D& circle,
                                           double a, double alpha, double tau) {
  if (!(a > 0.0)) throw FitError("off-resonant amplitude must be positive");
  const auto p = staged_params(phase, circle, a, alpha, tau);
  if (!(std::abs(p.phi) < kPi / 2)) throw FitError("impedance-mismatch angle outside (-pi/2, pi/2)");
  const double qi = diameter_corrected_qi(p.ql, p.qc_mag, p.phi);
  if (!(qi > 0.0) || !std::isfinite(qi)) {
    throw FitError("unphysical Qi <= 0 (circle diameter too large for the loaded Q)");
  }
  auto fit = make_resonator_fit(p.fr, p.ql, p.qc_mag, p.phi, p.tau, p.a, p.alpha);

  // First-order propagation from the phase-fit and circle uncertainties.
  const double n = std::max<double>(1.0, static_cast<double>(circle.num_points));
  const double radius_se = circle.rms_residual / std::sqrt(n);
  const double rel_r = radius_se / circle.radius;
  const double rel_ql = phase.ql_stderr / phase.ql;
  fit.uncertainties.fr = phase.fr_stderr;
  fit.uncertainties.ql = phase.ql_stderr;
  fit.uncertainties.qc_mag = fit.qc_mag * std::hypot(rel_ql, rel_r);
  fit.uncertainties.phi = circle.rms_residual * std::sqrt(2.0 / n) / circle.radius;
  const double q2 = fit.qi * fit.qi;
  const double d_ql = q2 / (fit.ql * fit.ql);
  const double d_qc = -q2 * std::cos(fit.phi) / (fit.qc_mag * fit.qc_mag);
  const double d_phi = -q2 * std::sin(fit.phi) / fit.qc_mag;
  fit.uncertainties.qi = std::sqrt(std::pow(d_ql * fit.uncertainties.ql, 2) +
                                   std::pow(d_qc * fit.uncertainties.qc_mag, 2) +
                                   std::pow(d_phi * fit.uncertainties.phi, 2));
  fit.uncertainties.a = radius_se;
  fit.uncertainties.alpha = radius_se / a;
  return fit;
}

double model_residual_rms(const NotchModelParams& params, const ComplexTrace& trace) {
  double sum = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    sum += std::norm(notch_model(params, trace.frequencies[i]) - trace.s21[i]);
  }
  return std::sqrt(sum / static_cast<double>(trace.size()));
}

double estimate_noise_rms(const ComplexTrace& trace) {
  std::vector<double> diffs;
  diffs.reserve(2 * trace.size());
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const Complex d = trace.s21[i] - trace.s21[i - 1];
    diffs.push_back(std::abs(d.real()));
    diffs.push_back(std::abs(d.imag()));
  }
  if (diffs.empty()) return 0.0;
  auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  // MAD of a difference of two N(0, s^2) draws; per-quadrature sigma is
  // 1.4826 * median / sqrt(2), and the complex RMS is sqrt(2) times that.
  return 1.4826 * *mid;
}

namespace {

struct Refinement {
  NotchModelParams params;
  lsq::Result result;
  Eigen::VectorXd scale;  // d(external)/d(internal) per parameter
  double alpha_tau_coupling = 0.0;  // d(alpha)/d(internal tau)
};

Refinement refine_jointly(const ComplexTrace& trace, const NotchModelParams& start,
                          int max_iterations) {
  const std::size_t n = trace.size();
  const double span = trace.frequencies.back() - trace.frequencies.front();
  const double half_width = start.fr / (2.0 * start.ql);
  const double tau_unit = 1.0 / (kTwoPi * span);

  // Internal parameters: [fr offset in half-widths, Ql/Ql0, Qc/Qc0, phi,
  // a/a0, phase at the centre frequency, tau offset in radians of phase
  // across the span]. Referencing alpha to f_mid rather than f = 0 removes
  // the near-perfect alpha/tau correlation.
  const double f_mid = 0.5 * (trace.frequencies.front() + trace.frequencies.back());
  Eigen::VectorXd scale(7);
  scale << half_width, start.ql, start.qc_mag, 1.0, start.a, 1.0, tau_unit;
  const auto unpack = [&](const Eigen::VectorXd& x) {
    NotchModelParams p;
    p.fr = start.fr + x[0] * half_width;
    p.ql = x[1] * start.ql;
    p.qc_mag = x[2] * start.qc_mag;
    p.phi = x[3];
    p.a = x[4] * start.a;
    p.tau = start.tau + x[6] * tau_unit;
    p.alpha = x[5] + kTwoPi * f_mid * p.tau;
    return p;
  };
  const lsq::ResidualFn residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const auto p = unpack(x);
    for (std::size_t i = 0; i < n; ++i) {
      const Complex d = notch_model(p, trace.frequencies[i]) - trace.s21[i];
      r[static_cast<Eigen::Index>(2 * i)] = d.real();
      r[static_cast<Eigen::Index>(2 * i + 1)] = d.imag();
    }
  };
  const double phi_limit = kPi / 2 - 1e-9;
  lsq::Options options;
  options.max_iterations = max_iterations;
  options.lower.resize(7);
  options.upper.resize(7);
  const double inf = std::numeric_limits<double>::infinity();
  options.lower << -inf, 1e-6, 1e-6, -phi_limit, 1e-6, -inf, -inf;
  options.upper << inf, inf, inf, phi_limit, inf, inf, inf;
  options.typical = Eigen::VectorXd::Ones(7);
  Eigen::VectorXd x0(7);
  x0 << 0.0, 1.0, 1.0, std::clamp(start.phi, -phi_limit, phi_limit), 1.0,
      wrap_angle(start.alpha - kTwoPi * f_mid * start.tau), 0.0;

  Refinement out;
  out.result = lsq::levenberg_marquardt(residuals, static_cast<Eigen::Index>(2 * n), x0, options);
  out.params = unpack(out.result.params);
  out.params.alpha = wrap_angle(out.params.alpha);
  out.scale = scale;
  out.alpha_tau_coupling = kTwoPi * f_mid * tau_unit;
  return out;
}

}  // namespace

ResonatorFitResult fit_resonator(const ComplexTrace& input, const ResonatorFitOptions& options) {
  const auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw FitError(std::string(name) + ": " + e.what());
    }
  };
  const auto trace = stage("validate_trace", [&] { return validate_trace(input); });
  const auto delay = stage("remove_cable_delay", [&] { return remove_cable_delay(trace); });
  const auto circle = stage("fit_circle", [&] { return fit_circle(delay.corrected.s21); });
  const auto phase = stage("fit_phase", [&] { return fit_phase(delay.corrected, circle); });

  const double linewidth = phase.fr / phase.ql;
  const double reach = std::max(phase.fr - trace.frequencies.front(),
                                trace.frequencies.back() - phase.fr);
  if (reach < 3.0 * linewidth) {
    throw FitError("remove_cable_delay: trace too narrow to estimate delay (spans " +
                   std::to_string(reach / linewidth) + " linewidths beyond resonance)");
  }

  const Complex p_off = off_resonant_point(circle, phase.theta0);
  auto staged = staged_params(phase, circle, std::abs(p_off), std::arg(p_off), delay.tau);
  if (!(staged.qc_mag > 0.0) || !std::isfinite(staged.qc_mag)) {
    throw FitError("extract_quality_factors: degenerate circle radius");
  }
  const double phi_limit = kPi / 2 - 1e-9;
  staged.phi = std::clamp(staged.phi, -phi_limit, phi_limit);

  const auto refined = stage("joint_refinement", [&] {
    auto r = refine_jointly(trace, staged, options.max_iterations);
    if (!r.result.converged) throw FitError("did not converge: " + r.result.message);
    return r;
  });

  const auto& p = refined.params;
  auto fit = stage("extract_quality_factors", [&] {
    if (!(diameter_corrected_qi(p.ql, p.qc_mag, p.phi) > 0.0)) {
      throw FitError("unphysical Qi <= 0 after refinement");
    }
    return make_resonator_fit(p.fr, p.ql, p.qc_mag, p.phi, p.tau, p.a, p.alpha);
  });
  fit.residual_rms = model_residual_rms(p, trace);

  const Eigen::MatrixXd cov = refined.result.normal_inverse() * refined.result.residual_variance();
  const auto& s = refined.scale;
  const auto sd = [&](int k) { return std::sqrt(std::max(cov(k, k), 0.0)) * s[k]; };
  fit.uncertainties.fr = sd(0);
  fit.uncertainties.ql = sd(1);
  fit.uncertainties.qc_mag = sd(2);
  fit.uncertainties.phi = sd(3);
  fit.uncertainties.a = sd(4);
  {
    const double c = refined.alpha_tau_coupling;
    const double var = cov(5, 5) + 2.0 * c * cov(5, 6) + c * c * cov(6, 6);
    fit.uncertainties.alpha = std::sqrt(std::max(var, 0.0));
  }
  fit.uncertainties.tau = sd(6);
  {
    const double q2 = fit.qi * fit.qi;
    Eigen::Vector3d grad(q2 / (fit.ql * fit.ql) * s[1],
                         -q2 * std::cos(fit.phi) / (fit.qc_mag * fit.qc_mag) * s[2],
                         -q2 * std::sin(fit.phi) / fit.qc_mag * s[3]);
    const Eigen::Matrix3d block = cov.block<3, 3>(1, 1);
    fit.uncertainties.qi = std::sqrt(std::max(grad.dot(block * grad), 0.0));
  }

  const double noise = estimate_noise_rms(trace);
  if (fit.residual_rms > options.residual_warning_factor * noise + 1e-9) {
    fit.warnings.push_back("residual RMS exceeds " +
                           std::to_string(options.residual_warning_factor) +
                           "x the noise floor: possible extra resonance or wrong model");
  }
  return fit;
}

}  // namespace cpwloss
