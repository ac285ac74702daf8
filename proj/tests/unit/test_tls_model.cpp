#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cpwloss/error.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {
namespace {

TlsFitResult planted() {
  TlsFitResult t;
  t.f_delta_tls = 1e-6;
  t.n_c = 10.0;
  t.beta = 0.3;
  t.delta0 = 2e-7;
  t.temperature = 0.01;
  return t;
}

constexpr double kFr = 5e9;

ResonatorSweepRecord planted_sweep(double noise, std::uint64_t seed) {
  const auto n = log_spaced(1.0, 1e7, 25);
  return synthesize_tls_sweep(planted(), kFr, n, noise, seed);
}

double percentile95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double pos = 0.95 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TEST(PhotonNumber, HandEvaluation) {
  CalibrationContext ctx;
  // 2 * (50/50) * (1e5^2 / 2e5) * 1e-15 / (hbar * (2 pi 4.45e9)^2), evaluated by hand.
  EXPECT_NEAR(photon_number(1e-15, 4.45e9, 1e5, 2e5, ctx), 1212.953300355845, 1e-9);
}

TEST(PhotonNumber, LinearityAndScaling) {
  CalibrationContext ctx;
  EXPECT_EQ(photon_number(0.0, 5e9, 1e5, 2e5, ctx), 0.0);
  const double base = photon_number(1e-15, 5e9, 1e5, 2e5, ctx);
  EXPECT_NEAR(photon_number(1e-15, 5e9, 2e5, 2e5, ctx), 4.0 * base, 1e-9 * base);
  EXPECT_NEAR(photon_number(3e-15, 5e9, 1e5, 2e5, ctx), 3.0 * base, 1e-9 * base);
  CalibrationContext scaled = ctx;
  scaled.z0 *= 7.0;
  scaled.zr *= 7.0;
  EXPECT_NEAR(photon_number(1e-15, 5e9, 1e5, 2e5, scaled), base, 1e-12 * base);
  EXPECT_THROW(photon_number(1e-15, 5e9, -1.0, 2e5, ctx), ValidationError);
  scaled.zr = 0.0;
  EXPECT_THROW(photon_number(1e-15, 5e9, 1e5, 2e5, scaled), ValidationError);
}

TEST(PhotonNumber, CouplingConvention) {
  EXPECT_EQ(coupling_q(2e5, 0.3, CouplingQ::kMagnitude), 2e5);
  EXPECT_NEAR(coupling_q(2e5, 0.3, CouplingQ::kDiameterCorrected), 2e5 / std::cos(0.3), 1e-6);
}

TEST(DbmToDeviceWatts, Examples) {
  EXPECT_DOUBLE_EQ(dbm_to_device_watts(0.0, 0.0), 1e-3);
  EXPECT_NEAR(dbm_to_device_watts(-30.0, 60.0), 1e-12, 1e-24);
  EXPECT_DOUBLE_EQ(dbm_to_device_watts(10.0, 10.0), 1e-3);
}

TEST(TlsQiModel, Examples) {
  auto p = planted();
  p.f_delta_tls = 0.0;
  for (double n : {0.0, 1.0, 1e6}) EXPECT_DOUBLE_EQ(tls_qi_model(p, n, kFr), 1.0 / 2e-7);
  p = planted();
  EXPECT_NEAR(tls_qi_model(p, 1e12 * p.n_c, kFr), 1.0 / p.delta0, 0.01 / p.delta0);
  p.temperature = 1e-6;  // tanh -> 1
  EXPECT_NEAR(tls_qi_model(p, 0.0, kFr), 1.0 / (1e-6 + 2e-7), 1e-6);
}

TEST(TlsQiModel, MonotoneAndBounded) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    TlsFitResult p;
    p.f_delta_tls = std::pow(10.0, -7.0 + 2.0 * u(rng));
    p.n_c = std::pow(10.0, -1.0 + 5.0 * u(rng));
    p.beta = 0.05 + 0.95 * u(rng);
    p.delta0 = std::pow(10.0, -8.0 + 2.0 * u(rng));
    p.temperature = 0.005 + 0.1 * u(rng);
    const double fr = 4e9 + 4e9 * u(rng);
    const double th = std::tanh(units::kHbar * units::kTwoPi * fr /
                                (2.0 * units::kBoltzmann * p.temperature));
    const double lo = 1.0 / (p.f_delta_tls * th + p.delta0);
    const double hi = 1.0 / p.delta0;
    double previous = 0.0;
    for (double n : log_spaced(1e-3, 1e10, 60)) {
      const double q = tls_qi_model(p, n, fr);
      EXPECT_GE(q, previous * (1 - 1e-14));
      EXPECT_GE(q, lo * (1 - 1e-12));
      EXPECT_LE(q, hi * (1 + 1e-12));
      previous = q;
    }
  }
}

TEST(FitTls, NoiselessRecoversAllParameters) {
  const auto fit = fit_tls(planted_sweep(0.0, 1), kFr, 0.01);
  EXPECT_NEAR(fit.f_delta_tls, 1e-6, 0.005 * 1e-6);
  EXPECT_NEAR(fit.n_c, 10.0, 0.005 * 10.0);
  EXPECT_NEAR(fit.beta, 0.3, 0.005 * 0.3);
  EXPECT_NEAR(fit.delta0, 2e-7, 0.005 * 2e-7);
}

TEST(FitTls, NoisyFDeltaNinetyFifthPercentileWithinTenPercent) {
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = fit_tls(planted_sweep(0.02, seed), kFr, 0.01);
    errors.push_back(std::abs(fit.f_delta_tls - 1e-6) / 1e-6);
  }
  EXPECT_LT(percentile95(errors), 0.10);
}

TEST(FitTls, ConstantQiGivesNoTlsLoss) {
  auto sweep = planted_sweep(0.0, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& p : sweep.points) {
    p.fit.qi = 2e6 * (1.0 + noise(rng));
    p.fit.uncertainties.qi = 0.01 * p.fit.qi;
  }
  const auto fit = fit_tls(sweep, kFr, 0.01);
  EXPECT_LE(fit.f_delta_tls, std::max(fit.uncertainties.f_delta_tls, 1e-12));
  EXPECT_NEAR(1.0 / fit.delta0, 2e6, 0.02 * 2e6);
}

TEST(FitTls, ReorderingDoesNotChangeTheFit) {
  const auto sweep = planted_sweep(0.02, 42);
  auto shuffled = sweep;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
  const auto a = fit_tls(sweep, kFr, 0.01);
  const auto b = fit_tls(shuffled, kFr, 0.01);
  EXPECT_DOUBLE_EQ(a.f_delta_tls, b.f_delta_tls);
  EXPECT_DOUBLE_EQ(a.delta0, b.delta0);
}

TEST(FitTls, DoublingQiHalvesLowPowerLoss) {
  const auto sweep = planted_sweep(0.02, 8);
  auto doubled = sweep;
  for (auto& p : doubled.points) {
    p.fit.qi *= 2.0;
    p.fit.uncertainties.qi *= 2.0;
  }
  const auto a = fit_tls(sweep, kFr, 0.01);
  const auto b = fit_tls(doubled, kFr, 0.01);
  EXPECT_NEAR(b.beta, a.beta, 1e-4);
  EXPECT_NEAR(b.f_delta_tls + b.delta0, 0.5 * (a.f_delta_tls + a.delta0),
              1e-4 * (a.f_delta_tls + a.delta0));
}

TEST(FitTls, PreconditionsAndDegenerateSweeps) {
  auto sweep = planted_sweep(0.0, 1);
  sweep.points.resize(4);
  EXPECT_THROW(fit_tls(sweep, kFr, 0.01), ValidationError);
  const auto narrow = synthesize_tls_sweep(planted(), kFr, log_spaced(10.0, 1e3, 10), 0.0, 1);
  EXPECT_THROW(fit_tls(narrow, kFr, 0.01), FitError);
  auto duplicate = planted_sweep(0.0, 1);
  duplicate.points[3].n_photons = duplicate.points[2].n_photons;
  EXPECT_THROW(fit_tls(duplicate, kFr, 0.01), ValidationError);
}

ResonatorSweepRecord fitted_record(const std::string& label, double thickness_nm, double fr,
                                   double f_delta, double delta0) {
  ResonatorSweepRecord r;
  r.label = label;
  r.film_thickness = units::nm(thickness_nm);
  PowerSweepPoint p;
  p.fit.fr = fr;
  r.points.push_back(p);
  TlsFitResult fit;
  fit.f_delta_tls = f_delta;
  fit.delta0 = delta0;
  r.tls_fit = fit;
  return r;
}

TEST(AggregateByThickness, GroupMeansAreReproduced) {
  std::vector<ResonatorSweepRecord> records;
  const std::vector<std::pair<double, double>> groups{{150, 1e-6}, {300, 8e-7}, {500, 5e-7}};
  for (const auto& [t, mean] : groups) {
    // Symmetric spread around the group mean.
    for (int k = -2; k <= 2; ++k) {
      records.push_back(fitted_record("r", t, 5e9 + 1e8 * k, mean * (1.0 + 0.1 * k), 1e-7));
    }
  }
  const auto agg = aggregate_by_thickness(records);
  ASSERT_EQ(agg.groups.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(agg.groups[i].thickness_nm, static_cast<long>(groups[i].first));
    EXPECT_NEAR(agg.groups[i].f_delta_mean, groups[i].second, 1e-15 * groups[i].second);
    EXPECT_EQ(agg.groups[i].count, 5u);
  }
  EXPECT_EQ(agg.series.size(), 15u);
}

TEST(AggregateByThickness, TrivialCases) {
  std::vector<ResonatorSweepRecord> one{fitted_record("a", 150, 5e9, 1.3e-6, 2e-7)};
  auto agg = aggregate_by_thickness(one);
  EXPECT_EQ(agg.groups[0].f_delta_mean, 1.3e-6);
  EXPECT_EQ(agg.groups[0].f_delta_std, 0.0);
  std::vector<ResonatorSweepRecord> two{fitted_record("a", 150, 5e9, 1e-6, 2e-7),
                                        fitted_record("b", 150, 6e9, 3e-6, 2e-7)};
  EXPECT_DOUBLE_EQ(aggregate_by_thickness(two).groups[0].f_delta_mean, 2e-6);
  EXPECT_THROW(aggregate_by_thickness(std::vector<ResonatorSweepRecord>{}), ValidationError);
  two[1].tls_fit.reset();
  EXPECT_THROW(aggregate_by_thickness(two), ValidationError);
}

TEST(Delta0Spectrum, SortedAndProportional) {
  EXPECT_TRUE(delta0_spectrum(std::vector<ResonatorSweepRecord>{}).empty());
  // delta0 proportional to fr, recovered through full TLS fits.
  const double k = 4e-17;  // per Hz
  std::vector<ResonatorSweepRecord> records;
  std::uint64_t seed = 0;
  for (double fr : {7.5e9, 4.2e9, 6.1e9, 5.0e9}) {
    auto truth = planted();
    truth.delta0 = k * fr;
    auto r = synthesize_tls_sweep(truth, fr, log_spaced(1.0, 1e7, 25), 0.0, ++seed);
    r.film_thickness = units::nm(500);
    r.tls_fit = fit_tls(r, fr, 0.01);
    records.push_back(r);
  }
  const auto series = delta0_spectrum(records);
  ASSERT_EQ(series.size(), 1u);
  EXPECT_TRUE(std::is_sorted(series[0].frequencies.begin(), series[0].frequencies.end()));
  EXPECT_NEAR(series[0].slope_per_hz, k, 0.005 * k);
}

}  // namespace
}  // namespace cpwloss
