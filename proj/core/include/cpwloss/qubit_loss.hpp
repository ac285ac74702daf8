#pragma once

// Qubit-side loss budget: T1 extraction, Purcell decay through the readout
// resonator, Q = w_q T1, and the Purcell-corrected TLS limit
//
//   (1/Q)(1 - T1/Tp) = 1/Q_TLS

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpwloss/types.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {

struct DecayTrace {
  std::vector<double> delays;      // s, strictly increasing
  std::vector<double> population;  // excited-state population
  double timestamp = 0.0;          // s since epoch
};

inline constexpr std::size_t kMinDecayPoints = 6;

void check_invariants(const DecayTrace& trace);

struct T1Fit {
  double t1 = 0.0;  // s
  double amplitude = 0.0;
  double offset = 0.0;
  double t1_stderr = 0.0;
  double amplitude_stderr = 0.0;
  double offset_stderr = 0.0;
  int iterations = 0;
};

/// p(t) = A exp(-t/T1) + B by least squares. Throws FitError when the decay
/// is not resolved (T1 beyond 100x the delay span, or no significant
/// amplitude).
T1Fit fit_t1(const DecayTrace& trace);

/// Noisy synthetic decay, deterministic for a given seed.
DecayTrace synthesize_decay(double t1, double amplitude, double offset,
                            std::span<const double> delays, double noise_sigma,
                            std::uint64_t seed);

struct Histogram {
  double origin = 0.0;
  double bin_width = 0.0;
  std::vector<std::size_t> counts;
};

struct T1Statistics {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  Histogram histogram;
};

inline constexpr double kT1HistogramBin = units::us(25.0);

T1Statistics t1_statistics(std::span<const double> t1_series, double bin_width = kT1HistogramBin);

struct DispersiveParams {
  double f_r = 0.0;       // Hz
  double q_loaded = 0.0;  // readout resonator Ql
  double chi = 0.0;       // Hz, chi / 2 pi
  double f_q = 0.0;       // Hz
};

void check_invariants(const DispersiveParams& d);

/// gamma = (w_r/Ql) * chi/|Delta| in angular units; 1/s.
double purcell_rate(const DispersiveParams& d);

/// 1/purcell_rate; infinite when chi = 0.
double purcell_time(const DispersiveParams& d);

/// chi (Hz) that makes purcell_time equal t_p for the given resonator.
double chi_for_purcell_time(double f_r, double q_loaded, double f_q, double t_p);

double quality_factor(double f_q, double t1);

/// Q / (1 - t1/t_p). Requires 0 <= t1 < t_p; an infinite t_p returns q.
double tls_limited_q(double q, double t1, double t_p);

struct ScreeningResult {
  bool included = true;
  std::string reason;  // empty when included
};

/// Excludes records with T2echo > 2 T1 or T1 > Tp.
ScreeningResult screen_qubit(const QubitRecord& record);

/// Q, Q_TLS and the Purcell-limited Q of one record.
LossBudget qubit_loss_budget(const QubitRecord& record);

struct Fig1bPoint {
  std::string label;
  long thickness_nm = 0;
  double t1_over_tp = 0.0;
  double q = 0.0;
  std::optional<double> q_tls;  // absent when T1 >= Tp
  bool included = true;
};

struct Fig1bGroup {
  std::string name;
  std::vector<long> thickness_nm;
  std::size_t count = 0;  // included records
  double mean_q = 0.0;
  std::optional<double> mean_q_half;     // T1 <= 0.5 Tp
  std::optional<double> mean_q_quarter;  // T1 <= 0.25 Tp
  std::size_t count_half = 0;
  std::size_t count_quarter = 0;
};

struct Fig1bSummary {
  std::vector<Fig1bPoint> points;  // every record, input order
  /// One group per thickness. With more than one thickness, "thicker" pools
  /// every film thicker than the thinnest and "all" pools everything, each
  /// with equal per-qubit weight.
  std::vector<Fig1bGroup> groups;

  const Fig1bGroup& group(const std::string& name) const;
};

/// Screens each record and averages Q = 2 pi f_q T1 over the included ones.
/// Throws ValidationError when no record survives screening.
Fig1bSummary aggregate_fig1b(std::span<const QubitRecord> records);

}  // namespace cpwloss
