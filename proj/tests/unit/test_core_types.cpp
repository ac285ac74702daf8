#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cpwloss/error.hpp"
#include "cpwloss/types.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {
namespace {

ComplexTrace flat_trace(std::size_t n) {
  ComplexTrace t;
  for (std::size_t i = 0; i < n; ++i) {
    t.frequencies.push_back(4e9 + 1e3 * static_cast<double>(i));
    t.s21.emplace_back(1.0, 0.0);
  }
  return t;
}

TEST(ValidateTrace, ValidTraceIsReturnedUnchanged) {
  const auto trace = flat_trace(201);
  const auto out = validate_trace(trace);
  EXPECT_EQ(out.frequencies, trace.frequencies);
  EXPECT_EQ(out.s21, trace.s21);
}

TEST(ValidateTrace, NanNamesOffendingIndex) {
  auto trace = flat_trace(201);
  trace.s21[57] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  try {
    validate_trace(trace);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("index 57"), std::string::npos) << e.what();
  }
}

TEST(ValidateTrace, TooFewPoints) {
  try {
    validate_trace(flat_trace(4));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("too few points"), std::string::npos);
  }
}

TEST(ValidateTrace, RejectsNonIncreasingFrequenciesAndNegativeAttenuation) {
  auto trace = flat_trace(20);
  trace.frequencies[10] = trace.frequencies[9];
  EXPECT_THROW(validate_trace(trace), ValidationError);
  trace = flat_trace(20);
  trace.line_attenuation_db = -1.0;
  EXPECT_THROW(validate_trace(trace), ValidationError);
  trace = flat_trace(20);
  trace.s21.pop_back();
  EXPECT_THROW(validate_trace(trace), ValidationError);
}

TEST(Units, DbmRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dbm(-160.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double p = dbm(rng);
    const double back = units::watts_to_dbm(units::dbm_to_watts(p));
    EXPECT_NEAR(back, p, 1e-12 * std::abs(p));
  }
  EXPECT_DOUBLE_EQ(units::dbm_to_watts(0.0), 1e-3);
}

TEST(ResonatorFitResult, IdentityHoldsAtConstruction) {
  const auto fit = make_resonator_fit(5e9, 5e4, 1e5, 0.1, 0.0, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(1.0 / fit.qi, 1.0 / 5e4 - std::cos(0.1) / 1e5);
  EXPECT_THROW(make_resonator_fit(5e9, 5e4, 4e4, 0.0, 0.0, 1.0, 0.0), ValidationError);
  EXPECT_THROW(make_resonator_fit(5e9, 5e4, 1e5, 1.6, 0.0, 1.0, 0.0), ValidationError);
}

TEST(LossBudget, AttributionCannotExceedTotal) {
  LossBudget ok{2e6, 4e6, 4e6, std::nullopt};
  EXPECT_NO_THROW(check_invariants(ok));
  EXPECT_NEAR(*ok.unattributed_loss(), 0.0, 1e-20);
  LossBudget bad{2e6, 3e6, 3e6, std::nullopt};
  EXPECT_THROW(check_invariants(bad), ValidationError);
  LossBudget partial{std::nullopt, 3e6, std::nullopt, std::nullopt};
  EXPECT_NO_THROW(check_invariants(partial));
}

TEST(QubitTable, BundledDatasetLoads) {
  const auto records = load_qubit_table(bundled_qubit_table_path());
  ASSERT_EQ(records.size(), 38u);
  const auto& q27 = records[26];
  EXPECT_EQ(q27.label, "Q27");
  EXPECT_DOUBLE_EQ(q27.f_q, 3.016e9);
  EXPECT_NEAR(q27.t1_mean, 270e-6, 1e-18);
  const double q = units::kTwoPi * q27.f_q * q27.t1_mean;
  EXPECT_NEAR(q, 5.1e6, 0.05 * 5.1e6);
  // T2 echo is absent (not zero) for Q7..Q13.
  for (int i = 6; i <= 12; ++i) EXPECT_FALSE(records[static_cast<std::size_t>(i)].t2echo_mean);
  EXPECT_TRUE(records[0].t2echo_mean);
  int excluded = 0;
  for (const auto& r : records) excluded += r.included ? 0 : 1;
  EXPECT_EQ(excluded, 2);
}

TEST(QubitTable, WriteThenParseReproducesRecords) {
  const auto records = load_qubit_table(bundled_qubit_table_path());
  std::stringstream buffer;
  write_qubit_table(buffer, records);
  const auto again = parse_qubit_table(buffer);
  ASSERT_EQ(again.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(again[i].label, records[i].label);
    EXPECT_NEAR(again[i].t_purcell, records[i].t_purcell, 1e-15);
    EXPECT_EQ(again[i].t2echo_mean.has_value(), records[i].t2echo_mean.has_value());
  }
}

TEST(QubitTable, MalformedRowNamesLine) {
  std::istringstream in(
      "label,film_thickness_nm,f_q_ghz,f_r_ghz,detuning_ghz,t1_mean_us,t1_std_us,"
      "t2echo_mean_us,t2echo_std_us,t_purcell_us,q_factor_1e6,included\n"
      "Q1,150,4.711,6.035,1.324,51,9,79,17,64,1.5,true\n"
      "Q2,150,4.662,6.173,1.511,fifty,14,100,25,155,1.7,true\n");
  try {
    parse_qubit_table(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(QubitTable, InconsistentQIsRejected) {
  std::istringstream in(
      "label,film_thickness_nm,f_q_ghz,f_r_ghz,detuning_ghz,t1_mean_us,t1_std_us,"
      "t2echo_mean_us,t2echo_std_us,t_purcell_us,q_factor_1e6,included\n"
      "Q1,150,4.711,6.035,1.324,51,9,79,17,64,2.5,true\n");
  EXPECT_THROW(parse_qubit_table(in), ParseError);
}

TEST(QubitTable, EmptyInputIsAnError) {
  std::istringstream in("");
  EXPECT_THROW(parse_qubit_table(in), ParseError);
}

}  // namespace
}  // namespace cpwloss
