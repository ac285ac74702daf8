#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cpwloss/error.hpp"
#include "cpwloss/resonance_fit.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {
namespace {

using units::kPi;
using units::kTwoPi;

// Independent evaluation of the notch model for the oracle checks below.
Complex reference_notch(double f, double fr, double ql, double qc, double phi, double a,
                        double alpha, double tau) {
  const double x = f / fr - 1.0;
  const Complex i(0.0, 1.0);
  return a * std::exp(i * alpha) * std::exp(-i * kTwoPi * f * tau) *
         (1.0 - (ql / qc) * std::exp(i * phi) / (1.0 + 2.0 * i * ql * x));
}

NotchModelParams reference_params() {
  NotchModelParams p;
  p.fr = 4.45e9;
  p.ql = 5e4;
  p.qc_mag = 1e5;
  p.phi = 0.1;
  p.a = 1.0;
  p.alpha = 0.0;
  p.tau = 40e-9;
  return p;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

NotchModelParams from_qi(double fr, double qi, double qc, double phi, double tau) {
  NotchModelParams p;
  p.fr = fr;
  p.qc_mag = qc;
  p.phi = phi;
  p.ql = 1.0 / (1.0 / qi + std::cos(phi) / qc);
  p.a = 1.0;
  p.alpha = 0.0;
  p.tau = tau;
  return p;
}

TEST(SynthesizeNotch, ValueAtResonance) {
  const auto p = reference_params();
  const std::vector<double> f{p.fr};
  const auto trace = synthesize_notch(p, f, 0.0, 1);
  const Complex expected = std::polar(p.a, p.alpha) * std::polar(1.0, -kTwoPi * p.fr * p.tau) *
                           (1.0 - (p.ql / p.qc_mag) * std::polar(1.0, p.phi));
  EXPECT_NEAR(std::abs(trace.s21[0] - expected), 0.0, 1e-12);
}

TEST(SynthesizeNotch, NoResonatorGivesFlatModulus) {
  auto p = reference_params();
  p.qc_mag = std::numeric_limits<double>::infinity();
  p.a = 0.7;
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 101);
  const auto trace = synthesize_notch(p, f, 0.0, 1);
  for (const auto& z : trace.s21) EXPECT_NEAR(std::abs(z), 0.7, 1e-12);
}

TEST(SynthesizeNotch, MinimumWithinOneStepOfResonance) {
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  const auto trace = synthesize_notch(p, f, 0.0, 1);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Complex ref = reference_notch(f[i], p.fr, p.ql, p.qc_mag, p.phi, p.a, p.alpha, p.tau);
    ASSERT_NEAR(std::abs(trace.s21[i] - ref), 0.0, 1e-12);
    if (std::abs(ref) < std::abs(reference_notch(f[argmin], p.fr, p.ql, p.qc_mag, p.phi, p.a,
                                                 p.alpha, p.tau))) {
      argmin = i;
    }
  }
  EXPECT_LE(std::abs(f[argmin] - p.fr), f[1] - f[0]);
}

TEST(SynthesizeNotch, DeterministicGivenSeedAndRejectsUnphysical) {
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 64);
  EXPECT_EQ(synthesize_notch(p, f, 1e-3, 9).s21, synthesize_notch(p, f, 1e-3, 9).s21);
  EXPECT_NE(synthesize_notch(p, f, 1e-3, 9).s21, synthesize_notch(p, f, 1e-3, 10).s21);
  auto bad = p;
  bad.qc_mag = 1e4;  // Ql > Qc: negative Qi
  EXPECT_THROW(synthesize_notch(bad, f, 0.0, 1), ValidationError);
  EXPECT_THROW(synthesize_notch(p, f, -1.0, 1), ValidationError);
}

TEST(FitCircle, ExactPoints) {
  std::vector<Complex> pts;
  for (int k = 0; k < 16; ++k) pts.push_back(Complex(0.5, 0.0) + std::polar(0.25, kTwoPi * k / 16));
  const auto c = fit_circle(pts);
  EXPECT_NEAR(c.center.real(), 0.5, 1e-10);
  EXPECT_NEAR(c.center.imag(), 0.0, 1e-10);
  EXPECT_NEAR(c.radius, 0.25, 1e-10);
  EXPECT_LT(c.rms_residual, 1e-12);
}

TEST(FitCircle, ShortArcIsRecovered) {
  // A 60 degree arc; the hyper fit must not shrink the radius.
  std::vector<Complex> pts;
  for (int k = 0; k < 40; ++k) pts.push_back(Complex(0.3, -0.2) + std::polar(0.1, 1.0 + k * kPi / 120));
  const auto c = fit_circle(pts);
  EXPECT_NEAR(c.radius, 0.1, 1e-10);
}

TEST(FitCircle, NoisyRadiusWithinOnePercent) {
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-3);
    std::vector<Complex> pts;
    for (int k = 0; k < 16; ++k) {
      pts.push_back(Complex(0.5, 0.0) + std::polar(0.25, kTwoPi * k / 16) +
                    Complex(noise(rng), noise(rng)));
    }
    errors.push_back(std::abs(fit_circle(pts).radius - 0.25) / 0.25);
  }
  EXPECT_LT(percentile(errors, 0.95), 1e-2);
}

TEST(FitCircle, DegenerateInputs) {
  const std::vector<Complex> three{{0, 1}, {1, 0}, {-1, 0}};
  EXPECT_THROW(fit_circle(three), FitError);
  const std::vector<Complex> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
  EXPECT_THROW(fit_circle(line), FitError);
}

TEST(RemoveCableDelay, RecoversPlantedDelay) {
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  const auto est = remove_cable_delay(synthesize_notch(p, f, 0.0, 1));
  EXPECT_NEAR(est.tau, 40e-9, 0.01 * 40e-9);
}

TEST(RemoveCableDelay, ZeroDelayStaysZero) {
  auto p = reference_params();
  p.tau = 0.0;
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  const auto est = remove_cable_delay(synthesize_notch(p, f, 0.0, 1));
  const double span = f.back() - f.front();
  EXPECT_LT(std::abs(est.tau) * kTwoPi * span, 0.01);
}

TEST(RemoveCableDelay, PureNoiseIsFlagged) {
  // Either an error or an estimate whose uncertainty exceeds its value.
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  int flagged = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-3);
    ComplexTrace trace;
    trace.frequencies = f;
    for (std::size_t i = 0; i < f.size(); ++i) trace.s21.emplace_back(noise(rng), noise(rng));
    try {
      const auto est = remove_cable_delay(trace);
      if (est.tau_stderr > std::abs(est.tau)) ++flagged;
    } catch (const FitError&) {
      ++flagged;
    }
  }
  EXPECT_EQ(flagged, 50);
}

TEST(RemoveCableDelay, FlatTraceWithoutResonanceIsAnError) {
  auto p = reference_params();
  p.qc_mag = std::numeric_limits<double>::infinity();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  EXPECT_THROW(remove_cable_delay(synthesize_notch(p, f, 1e-3, 3)), FitError);
}

struct Staged {
  ComplexTrace corrected;
  Circle2D circle;
};

Staged stage(const ComplexTrace& trace) {
  const auto delay = remove_cable_delay(trace);
  return {delay.corrected, fit_circle(delay.corrected.s21)};
}

TEST(FitPhase, NoiselessRecoversLoadedQ) {
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  const auto s = stage(synthesize_notch(p, f, 0.0, 1));
  const auto phase = fit_phase(s.corrected, s.circle);
  EXPECT_NEAR(phase.ql, p.ql, 1e-3 * p.ql);
  EXPECT_NEAR(phase.fr, p.fr, 1e-3 * p.fr / p.ql);
}

TEST(FitPhase, MirroredTraceKeepsResonanceAndReflectsTheta0) {
  auto p = reference_params();
  p.tau = 0.0;
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  const auto trace = synthesize_notch(p, f, 0.0, 1);
  const auto circle = fit_circle(trace.s21);
  const auto phase = fit_phase(trace, circle);

  // Mirror about the centre frequency: reverse the sweep and conjugate.
  ComplexTrace mirrored = trace;
  std::vector<Complex> flipped(trace.s21.rbegin(), trace.s21.rend());
  for (auto& z : flipped) z = std::conj(z);
  mirrored.s21 = flipped;
  Circle2D mc = circle;
  mc.center = std::conj(circle.center);
  const auto mphase = fit_phase(mirrored, mc);
  EXPECT_NEAR(mphase.fr, phase.fr, 1e-6 * p.fr / p.ql);
  EXPECT_NEAR(mphase.ql, phase.ql, 1e-6 * phase.ql);
  EXPECT_NEAR(std::remainder(mphase.theta0 + phase.theta0, kTwoPi), 0.0, 1e-8);
}

TEST(FitPhase, NoisyMedianLoadedQErrorBelowTwoPercent) {
  const auto p = reference_params();
  const auto f = linewidth_grid(p.fr, p.ql, 5.0, 401);
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = stage(synthesize_notch(p, f, 1e-3, seed));
    errors.push_back(std::abs(fit_phase(s.corrected, s.circle).ql - p.ql) / p.ql);
  }
  EXPECT_LT(percentile(errors, 0.5), 0.02);
}

TEST(ExtractQualityFactors, MatchedCircleGivesExpectedQi) {
  PhaseFit phase;
  phase.fr = 5e9;
  phase.ql = 5e4;
  const double k = phase.ql / 1e5;  // Ql/|Qc|
  for (const double phi : {0.0, 0.1}) {
    Circle2D circle;
    circle.center = 1.0 - 0.5 * k * std::polar(1.0, phi);
    circle.radius = 0.5 * k;
    circle.num_points = 100;
    const auto fit = extract_quality_factors(phase, circle, 1.0, 0.0);
    EXPECT_NEAR(fit.qc_mag, 1e5, 1e-6);
    EXPECT_NEAR(fit.phi, phi, 1e-12);
    EXPECT_NEAR(fit.qi, 1.0 / (1.0 / 5e4 - std::cos(phi) / 1e5), 1e-6);
  }
}

TEST(ExtractQualityFactors, DiameterOfOneOrMoreIsUnphysical) {
  PhaseFit phase;
  phase.fr = 5e9;
  phase.ql = 5e4;
  Circle2D circle;
  circle.radius = 0.5;  // Ql/(2 Ql)
  circle.center = 0.5;
  circle.num_points = 100;
  EXPECT_THROW(extract_quality_factors(phase, circle, 1.0, 0.0), FitError);
  circle.radius = 0.6;
  circle.center = 0.4;
  EXPECT_THROW(extract_quality_factors(phase, circle, 1.0, 0.0), FitError);
}

TEST(ExtractQualityFactors, OffResonantPointFromTheta0) {
  // For the normalised model the off-resonant point is 1 + 0i.
  const double k = 0.5;
  const double phi = 0.2;
  Circle2D circle;
  circle.center = 1.0 - 0.5 * k * std::polar(1.0, phi);
  circle.radius = 0.5 * k;
  const Complex p = off_resonant_point(circle, phi + kPi);
  EXPECT_NEAR(std::abs(p - 1.0), 0.0, 1e-12);
}

TEST(FitResonator, NoiselessRecoversQiWithinPointOnePercent) {
  const auto p = from_qi(5.2e9, 1e6, 2e5, 0.05, 40e-9);
  const auto f = linewidth_grid(p.fr, p.ql, 8.0, 801);
  const auto fit = fit_resonator(synthesize_notch(p, f, 0.0, 1));
  EXPECT_NEAR(fit.qi, 1e6, 1e-3 * 1e6);
  EXPECT_TRUE(fit.warnings.empty());
}

TEST(FitResonator, NoisyQiNinetyFifthPercentileWithinFivePercent) {
  const auto p = from_qi(5.2e9, 1e6, 2e5, 0.05, 40e-9);
  const auto f = linewidth_grid(p.fr, p.ql, 8.0, 801);
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = fit_resonator(synthesize_notch(p, f, 1e-3, seed));
    errors.push_back(std::abs(fit.qi - 1e6) / 1e6);
  }
  EXPECT_LT(percentile(errors, 0.95), 0.05);
}

TEST(FitResonator, RefinementNeverIncreasesResidual) {
  const auto p = from_qi(6.1e9, 3e5, 1e5, -0.2, 25e-9);
  const auto f = linewidth_grid(p.fr, p.ql, 8.0, 601);
  const auto trace = synthesize_notch(p, f, 2e-3, 17);
  const auto fit = fit_resonator(trace);
  // The truth is a feasible point for the joint fit, so the optimum cannot be worse.
  EXPECT_LE(fit.residual_rms, model_residual_rms(p, trace) * (1 + 1e-9));
  EXPECT_GT(fit.uncertainties.qi, 0.0);
}

TEST(FitResonator, TwoResonancesAreFlagged) {
  const auto p1 = from_qi(5.0e9, 5e5, 1e5, 0.0, 30e-9);
  auto p2 = p1;
  p2.fr = p1.fr + 3.0 * p1.fr / p1.ql;
  const auto f = linewidth_grid(p1.fr + 1.5 * p1.fr / p1.ql, p1.ql, 10.0, 801);
  auto trace = synthesize_notch(p1, f, 1e-3, 5);
  auto second = p2;
  second.tau = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) trace.s21[i] *= notch_model(second, f[i]);
  bool flagged = false;
  try {
    const auto fit = fit_resonator(trace);
    flagged = !fit.warnings.empty();
  } catch (const FitError&) {
    flagged = true;
  }
  EXPECT_TRUE(flagged);
}

TEST(FitResonator, StageNameInErrors) {
  ComplexTrace tiny;
  for (int i = 0; i < 4; ++i) {
    tiny.frequencies.push_back(5e9 + i);
    tiny.s21.emplace_back(1.0, 0.0);
  }
  try {
    fit_resonator(tiny);
    FAIL();
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("validate_trace"), std::string::npos);
  }
}

TEST(FitResonatorProperty, NoiselessRoundTripRecoversAllParameters) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double qi = std::pow(10.0, 5.0 + 1.7 * u(rng));
    const double qc = std::pow(10.0, 4.7 + 1.3 * u(rng));
    NotchModelParams p = from_qi(4e9 + 4e9 * u(rng), qi, qc, -0.3 + 0.6 * u(rng), 60e-9 * u(rng));
    p.a = 0.5 + u(rng);
    p.alpha = -kPi + kTwoPi * u(rng);
    const auto f = linewidth_grid(p.fr, p.ql, 8.0, 801);
    const auto fit = fit_resonator(synthesize_notch(p, f, 0.0, 1));
    SCOPED_TRACE("trial " + std::to_string(trial));
    EXPECT_NEAR(fit.fr, p.fr, 1e-3 * p.fr / p.ql);
    EXPECT_NEAR(fit.ql, p.ql, 1e-3 * p.ql);
    EXPECT_NEAR(fit.qc_mag, p.qc_mag, 1e-3 * p.qc_mag);
    EXPECT_NEAR(fit.qi, qi, 1e-3 * qi);
    EXPECT_NEAR(fit.phi, p.phi, 1e-3 * std::max(std::abs(p.phi), 0.01));
    EXPECT_NEAR(fit.a, p.a, 1e-3 * p.a);
    EXPECT_NEAR(std::remainder(fit.alpha - p.alpha, kTwoPi), 0.0, 1e-3);
    EXPECT_NEAR(fit.tau, p.tau, 1e-3 * std::max(p.tau, 1e-9));
  }
}

TEST(FitResonatorProperty, ComplexScaleChangesOnlyEnvironment) {
  const auto p = from_qi(5.5e9, 8e5, 3e5, 0.15, 35e-9);
  const auto f = linewidth_grid(p.fr, p.ql, 8.0, 801);
  const auto trace = synthesize_notch(p, f, 5e-4, 11);
  auto scaled = trace;
  const Complex factor = std::polar(0.3, 2.0);
  for (auto& z : scaled.s21) z *= factor;
  // Noise scales with the trace, so the fits see identical geometry.
  const auto a = fit_resonator(trace);
  const auto b = fit_resonator(scaled);
  EXPECT_NEAR(b.fr, a.fr, 1e-6 * a.fr / a.ql);
  EXPECT_NEAR(b.ql, a.ql, 1e-6 * a.ql);
  EXPECT_NEAR(b.qc_mag, a.qc_mag, 1e-6 * a.qc_mag);
  EXPECT_NEAR(b.qi, a.qi, 1e-6 * a.qi);
  EXPECT_NEAR(b.phi, a.phi, 1e-6);
  EXPECT_NEAR(b.a, 0.3 * a.a, 1e-6 * a.a);
  EXPECT_NEAR(std::remainder(b.alpha - a.alpha - 2.0, kTwoPi), 0.0, 1e-5);
}

TEST(FitResonatorProperty, FrequencyShiftMovesOnlyResonance) {
  auto p = from_qi(5.5e9, 8e5, 3e5, 0.15, 0.0);
  const auto f = linewidth_grid(p.fr, p.ql, 8.0, 801);
  const auto trace = synthesize_notch(p, f, 5e-4, 12);
  auto shifted = trace;
  const double df = 2.5e6;
  for (auto& x : shifted.frequencies) x += df;
  const auto a = fit_resonator(trace);
  const auto b = fit_resonator(shifted);
  EXPECT_NEAR(b.fr - a.fr, df, 1e-3 * a.fr / a.ql);
  // Ql scales with fr at fixed linewidth; relative change is df/fr ~ 5e-4.
  EXPECT_NEAR(b.ql / a.ql, (a.fr + df) / a.fr, 1e-3);
  EXPECT_NEAR(b.qi / a.qi, (a.fr + df) / a.fr, 1e-3);
  EXPECT_NEAR(b.phi, a.phi, 1e-3);
}

}  // namespace
}  // namespace cpwloss
