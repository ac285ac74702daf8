#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cpwloss/error.hpp"
#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {
namespace {

using units::us;

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return v;
}

const std::vector<QubitRecord>& table() {
  static const auto records = load_qubit_table(bundled_qubit_table_path());
  return records;
}

const QubitRecord& row(const std::string& label) {
  for (const auto& r : table()) {
    if (r.label == label) return r;
  }
  throw std::runtime_error("missing " + label);
}

TEST(FitT1, NoisyRoundTrip) {
  const auto delays = linspace(0.0, us(1500), 30);
  std::vector<double> errors;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto fit = fit_t1(synthesize_decay(us(501), 1.0, 0.0, delays, 0.01, seed));
    errors.push_back(std::abs(fit.t1 - us(501)) / us(501));
  }
  EXPECT_LT(*std::max_element(errors.begin(), errors.end()), 0.05);
}

TEST(FitT1, NoiselessRoundTrip) {
  const auto fit = fit_t1(synthesize_decay(us(501), 0.9, 0.05, linspace(0.0, us(1500), 30), 0, 1));
  EXPECT_NEAR(fit.t1, us(501), 1e-3 * us(501));
  EXPECT_NEAR(fit.amplitude, 0.9, 1e-6);
  EXPECT_NEAR(fit.offset, 0.05, 1e-6);
}

TEST(FitT1, ConstantTraceIsUnresolvable) {
  DecayTrace flat;
  flat.delays = linspace(0.0, us(1500), 30);
  flat.population.assign(30, 0.3);
  EXPECT_THROW(fit_t1(flat), FitError);
  const auto slow = synthesize_decay(1.0, 1.0, 0.0, linspace(0.0, us(100), 30), 0.01, 4);
  EXPECT_THROW(fit_t1(slow), FitError);
}

TEST(FitT1, TimeShiftLeavesT1Unchanged) {
  const auto delays = linspace(0.0, us(1500), 30);
  const auto trace = synthesize_decay(us(320), 1.0, 0.02, delays, 0.01, 9);
  auto shifted = trace;
  for (auto& d : shifted.delays) d += us(200);
  const auto a = fit_t1(trace);
  const auto b = fit_t1(shifted);
  EXPECT_NEAR(b.t1, a.t1, 1e-6 * a.t1);
  EXPECT_NEAR(b.offset, a.offset, 1e-6);
  EXPECT_NEAR(b.amplitude * std::exp(-us(200) / b.t1), a.amplitude, 1e-6);
}

TEST(FitT1, RejectsInvalidTraces) {
  DecayTrace t;
  t.delays = linspace(0.0, 1e-3, 5);
  t.population.assign(5, 0.5);
  EXPECT_THROW(fit_t1(t), ValidationError);
  t.delays = linspace(0.0, 1e-3, 8);
  t.population.assign(8, 0.5);
  t.population[2] = 1.5;
  EXPECT_THROW(fit_t1(t), ValidationError);
}

TEST(T1Statistics, ConstructedSeriesIsReproduced) {
  // Standardise random draws, then map to mean 270 us and std 83 us.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(160);
  for (auto& v : z) v = normal(rng);
  double mean = 0.0;
  for (double v : z) mean += v / 160.0;
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean) / 159.0;
  std::vector<double> series;
  for (double v : z) series.push_back(us(270) + us(83) * (v - mean) / std::sqrt(var));
  const auto stats = t1_statistics(series);
  EXPECT_NEAR(stats.mean, us(270), 0.01 * us(270));
  EXPECT_NEAR(stats.std, us(83), 0.01 * us(83));
  std::size_t total = 0;
  for (auto c : stats.histogram.counts) total += c;
  EXPECT_EQ(total, 160u);
  EXPECT_EQ(stats.histogram.bin_width, us(25));
}

TEST(T1Statistics, HandComputedCases) {
  const std::vector<double> one{us(123)};
  EXPECT_EQ(t1_statistics(one).std, 0.0);
  const std::vector<double> two{us(100), us(300)};
  const auto s = t1_statistics(two);
  EXPECT_NEAR(s.mean, us(200), 1e-15);
  EXPECT_NEAR(s.std, us(141.42135623730951), 1e-12);
  EXPECT_EQ(s.histogram.counts[4], 1u);   // 100 us in [100, 125)
  EXPECT_EQ(s.histogram.counts[12], 1u);  // 300 us in [300, 325)
  EXPECT_THROW(t1_statistics(std::vector<double>{}), ValidationError);
}

TEST(Purcell, Examples) {
  DispersiveParams d{6.386e9, 1e4, 0.0, 3.016e9};
  EXPECT_EQ(purcell_rate(d), 0.0);
  EXPECT_TRUE(std::isinf(purcell_time(d)));
  d.chi = 1e6;
  const double gamma = purcell_rate(d);
  d.q_loaded *= 2.0;
  EXPECT_NEAR(purcell_rate(d), 0.5 * gamma, 1e-12 * gamma);
  d.f_q = d.f_r;
  EXPECT_THROW(purcell_rate(d), ValidationError);
}

TEST(Purcell, SelfConsistentInversionForQ27) {
  const auto& q27 = row("Q27");
  const double ql = 8e3;
  const double chi = chi_for_purcell_time(q27.f_r, ql, q27.f_q, q27.t_purcell);
  const DispersiveParams d{q27.f_r, ql, chi, q27.f_q};
  EXPECT_NEAR(purcell_time(d), us(1141), 1e-9 * us(1141));
}

TEST(Purcell, DetuningSignDoesNotMatter) {
  const DispersiveParams below{6.0e9, 1e4, 2e5, 4.5e9};
  const DispersiveParams above{6.0e9, 1e4, 2e5, 7.5e9};
  EXPECT_DOUBLE_EQ(purcell_rate(below), purcell_rate(above));
}

TEST(QualityFactor, TableRows) {
  EXPECT_NEAR(quality_factor(3.016e9, us(270)), 5.1e6, 0.05e6);
  EXPECT_NEAR(quality_factor(4.711e9, us(51)), 1.5e6, 0.05e6);
  EXPECT_EQ(quality_factor(4e9, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(quality_factor(4e9, 2e-4), 2.0 * quality_factor(4e9, 1e-4));
  EXPECT_DOUBLE_EQ(quality_factor(8e9, 1e-4), 2.0 * quality_factor(4e9, 1e-4));
}

TEST(TlsLimitedQ, Examples) {
  EXPECT_DOUBLE_EQ(tls_limited_q(2e6, 1.0, 2.0), 4e6);
  EXPECT_DOUBLE_EQ(tls_limited_q(2e6, 0.0, 2.0), 2e6);
  EXPECT_NEAR(tls_limited_q(1.5e6, us(51), us(64)), 7.4e6, 0.05e6);
  EXPECT_THROW(tls_limited_q(2e6, 2.0, 2.0), ValidationError);
  EXPECT_THROW(tls_limited_q(2e6, 3.0, 2.0), ValidationError);
}

TEST(TlsLimitedQ, NeverBelowQ) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double q = 1e5 + 1e7 * u(rng);
    const double tp = 1e-4 + 1e-2 * u(rng);
    const double t1 = 0.999 * tp * u(rng);
    EXPECT_GE(tls_limited_q(q, t1, tp), q);
  }
  EXPECT_EQ(tls_limited_q(3e6, 1e-4, std::numeric_limits<double>::infinity()), 3e6);
}

TEST(Screening, TableRowsAndReasons) {
  const auto q22 = screen_qubit(row("Q22"));
  EXPECT_FALSE(q22.included);
  EXPECT_NE(q22.reason.find("T2echo > 2*T1"), std::string::npos);
  const auto q38 = screen_qubit(row("Q38"));
  EXPECT_FALSE(q38.included);
  EXPECT_NE(q38.reason.find("T1 > Tp"), std::string::npos);
  EXPECT_TRUE(screen_qubit(row("Q27")).included);
}

TEST(Screening, BundledDatasetExcludesExactlyTwo) {
  std::set<std::string> excluded;
  for (const auto& r : table()) {
    if (!screen_qubit(r).included) excluded.insert(r.label);
    // Screening agrees with the dataset's own inclusion column.
    EXPECT_EQ(screen_qubit(r).included, r.included) << r.label;
  }
  EXPECT_EQ(excluded, (std::set<std::string>{"Q22", "Q38"}));
}

TEST(LossBudget, QubitBudgetCloses) {
  for (const auto& r : table()) {
    const auto budget = qubit_loss_budget(r);
    if (r.t1_mean > r.t_purcell) {
      // Purcell decay alone would exceed the measured loss.
      EXPECT_THROW(check_invariants(budget), ValidationError) << r.label;
      continue;
    }
    EXPECT_NO_THROW(check_invariants(budget));
    if (budget.q_tls) {
      EXPECT_NEAR(*budget.unattributed_loss(), 0.0, 1e-9 / *budget.q_total) << r.label;
    }
  }
}

TEST(AggregateFig1b, BundledDatasetMeans) {
  const auto summary = aggregate_fig1b(table());
  const auto& thin = summary.group("150 nm");
  const auto& thick = summary.group("thicker");
  EXPECT_NEAR(thin.mean_q, 2.1e6, 0.1 * 2.1e6);
  EXPECT_NEAR(thick.mean_q, 3.2e6, 0.1 * 3.2e6);
  ASSERT_TRUE(thin.mean_q_half && thick.mean_q_half);
  EXPECT_NEAR(*thin.mean_q_half, 2.1e6, 0.1 * 2.1e6);
  EXPECT_NEAR(*thick.mean_q_half, 3.5e6, 0.1 * 3.5e6);
  ASSERT_TRUE(thick.mean_q_quarter);
  EXPECT_NEAR(*thick.mean_q_quarter, 3.8e6, 0.1 * 3.8e6);
  EXPECT_EQ(thin.count + thick.count, 36u);
  EXPECT_EQ(summary.points.size(), 38u);
}

TEST(AggregateFig1b, SingleRecordGroup) {
  const std::vector<QubitRecord> one{row("Q27")};
  const auto summary = aggregate_fig1b(one);
  ASSERT_EQ(summary.groups.size(), 1u);
  EXPECT_DOUBLE_EQ(summary.groups[0].mean_q, quality_factor(row("Q27").f_q, row("Q27").t1_mean));
  const std::vector<QubitRecord> none{row("Q22")};
  EXPECT_THROW(aggregate_fig1b(none), ValidationError);
}

}  // namespace
}  // namespace cpwloss
