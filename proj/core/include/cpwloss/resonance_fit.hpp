#pragma once

// Notch-type resonator fitting by diameter-corrected circle fitting.
//
// Model, with x = f/fr - 1:
//
//   S21(f) = a e^{i alpha} e^{-2 pi i f tau} [1 - (Ql/|Qc|) e^{i phi} / (1 + 2 i Ql x)]
//
// The staged pipeline removes the cable delay, fits a circle to the corrected
// data, fits the phase of the points around the circle centre, and maps the
// circle geometry to quality factors. A joint bounded least-squares fit of all
// seven model parameters against the raw complex data finishes the job.

#include <cstdint>
#include <span>
#include <vector>

#include "cpwloss/types.hpp"

namespace cpwloss {

struct Circle2D {
  Complex center;
  double radius = 0.0;
  double rms_residual = 0.0;  // RMS radial distance of the input points
  std::size_t num_points = 0;
};

struct NotchModelParams {
  double fr = 0.0;
  double ql = 0.0;
  double qc_mag = 0.0;
  double phi = 0.0;
  double a = 1.0;
  double alpha = 0.0;
  double tau = 0.0;
};

/// Throws ValidationError unless fr, Ql, |Qc| > 0, |phi| < pi/2 and the
/// implied Qi is non-negative (Ql <= |Qc|/cos(phi)).
void check_physical(const NotchModelParams& params);

Complex notch_model(const NotchModelParams& params, double frequency);

/// Notch model plus i.i.d. Gaussian noise of `noise_sigma` per quadrature.
/// Deterministic for a given seed.
ComplexTrace synthesize_notch(const NotchModelParams& params, std::span<const double> frequencies,
                              double noise_sigma, std::uint64_t seed);

/// `count` points spread uniformly over fr +- half_span_linewidths * fr/Ql.
std::vector<double> linewidth_grid(double fr, double ql, double half_span_linewidths,
                                   std::size_t count);

struct DelayEstimate {
  ComplexTrace corrected;  // input multiplied by e^{+2 pi i f tau}
  double tau = 0.0;
  double tau_stderr = 0.0;  // from the off-resonant phase regression
};

/// Estimates the cable delay from the outer 10% of points on each edge and
/// refines it by making the corrected data as circular as possible.
DelayEstimate remove_cable_delay(const ComplexTrace& trace);

/// Algebraic circle fit with Al-Sharadqah & Chernov "hyper" normalisation,
/// which stays unbiased on short arcs. Needs >= 4 non-collinear points.
Circle2D fit_circle(std::span<const Complex> points);

struct PhaseFit {
  double fr = 0.0;
  double ql = 0.0;
  double theta0 = 0.0;
  double fr_stderr = 0.0;
  double ql_stderr = 0.0;
  double theta0_stderr = 0.0;
  int iterations = 0;
};

/// Fits theta(f) = theta0 + 2 atan(2 Ql (1 - f/fr)) to the angle of the
/// delay-corrected points around the circle centre.
PhaseFit fit_phase(const ComplexTrace& corrected, const Circle2D& circle);

/// Off-resonant point a e^{i alpha} implied by a circle and phase fit.
Complex off_resonant_point(const Circle2D& circle, double theta0);

/// Diameter-corrected quality factors from the staged estimates. `circle`
/// lives in the delay-corrected plane; a e^{i alpha} is the off-resonant
/// point used to normalise it. Throws FitError when Qi <= 0.
ResonatorFitResult extract_quality_factors(const PhaseFit& phase, const Circle2D& circle,
                                           double a, double alpha, double tau = 0.0);

struct ResonatorFitOptions {
  int max_iterations = 200;
  /// Residual RMS above this multiple of the estimated noise floor raises a
  /// warning on the result.
  double residual_warning_factor = 3.0;
};

/// Full pipeline. Errors from any stage are rethrown as FitError prefixed
/// with the stage name.
ResonatorFitResult fit_resonator(const ComplexTrace& trace, const ResonatorFitOptions& options = {});

/// RMS of |model - data| over the trace.
double model_residual_rms(const NotchModelParams& params, const ComplexTrace& trace);

/// Complex-magnitude noise RMS estimated from point-to-point differences.
double estimate_noise_rms(const ComplexTrace& trace);

}  // namespace cpwloss
