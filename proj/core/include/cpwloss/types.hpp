#pragma once

// Shared domain vocabulary. Every quantity is stored in SI units; field names
// carry the unit only where it is not SI-obvious.

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cpwloss {

using Complex = std::complex<double>;

/// A frequency-indexed complex S21 sweep with drive metadata.
struct ComplexTrace {
  std::vector<double> frequencies;  // Hz, strictly increasing
  std::vector<Complex> s21;
  double applied_power_dbm = 0.0;    // at the instrument output
  double line_attenuation_db = 0.0;  // instrument to device port
  double temperature = 0.01;         // K

  std::size_t size() const { return frequencies.size(); }
};

inline constexpr std::size_t kMinTracePoints = 8;

/// Returns the trace unchanged when it satisfies the ComplexTrace
/// invariants; otherwise throws ValidationError naming the first offending
/// index and value.
ComplexTrace validate_trace(ComplexTrace trace);

struct ResonatorUncertainties {
  double fr = 0.0;
  double ql = 0.0;
  double qc_mag = 0.0;
  double phi = 0.0;
  double qi = 0.0;
  double tau = 0.0;
  double a = 0.0;
  double alpha = 0.0;
};

/// Result of a notch-type resonator fit. Construct through
/// make_resonator_fit(), which derives qi from the diameter-corrected identity
/// 1/qi = 1/ql - cos(phi)/qc_mag and checks the remaining invariants.
struct ResonatorFitResult {
  double fr = 0.0;      // Hz
  double ql = 0.0;
  double qc_mag = 0.0;
  double phi = 0.0;     // rad, |phi| < pi/2
  double qi = 0.0;
  double tau = 0.0;     // s
  double a = 1.0;
  double alpha = 0.0;   // rad
  ResonatorUncertainties uncertainties;
  double residual_rms = 0.0;
  std::vector<std::string> warnings;
};

/// 1/Qi = 1/Ql - Re(e^{i phi})/|Qc|. Returns a non-positive value when the
/// coupling loss exceeds the total loss.
double diameter_corrected_qi(double ql, double qc_mag, double phi);

ResonatorFitResult make_resonator_fit(double fr, double ql, double qc_mag, double phi,
                                      double tau, double a, double alpha);

/// Throws ValidationError if any ResonatorFitResult invariant is violated.
void check_invariants(const ResonatorFitResult& fit);

struct PowerSweepPoint {
  ResonatorFitResult fit;
  double n_photons = 0.0;
  double p_in = 0.0;  // W at the device input port
};

struct TlsUncertainties {
  double f_delta_tls = 0.0;
  double n_c = 0.0;
  double beta = 0.0;
  double delta0 = 0.0;
};

/// Parameters of the interacting-TLS loss model.
struct TlsFitResult {
  double f_delta_tls = 0.0;
  double n_c = 1.0;
  double beta = 0.5;
  double delta0 = 0.0;
  double temperature = 0.01;  // K
  TlsUncertainties uncertainties;
  double residual_rms = 0.0;  // in loss units (1/Qi)
  int iterations = 0;
  int starts = 1;
};

void check_invariants(const TlsFitResult& fit);

/// One row of the qubit summary dataset.
struct QubitRecord {
  std::string label;
  double film_thickness = 0.0;  // m
  double f_q = 0.0;             // Hz
  double f_r = 0.0;             // Hz
  double detuning = 0.0;        // Hz, magnitude |f_q - f_r|
  double t1_mean = 0.0;         // s
  double t1_std = 0.0;          // s
  std::optional<double> t2echo_mean;  // s
  std::optional<double> t2echo_std;   // s
  double t_purcell = 0.0;       // s
  double q_factor = 0.0;        // printed Q, dimensionless
  bool included = true;

  /// Film thickness rounded to whole nanometres; used as a grouping key.
  long thickness_nm() const;
};

/// Relative tolerance between 2*pi*f_q*T1 and the printed (one-decimal) Q.
inline constexpr double kPrintedQTolerance = 0.05;

void check_invariants(const QubitRecord& record);

/// Loss attribution by channel. Absent entries are not attributed.
struct LossBudget {
  std::optional<double> q_total;
  std::optional<double> q_tls;
  std::optional<double> q_purcell;
  std::optional<double> q_other;

  /// 1/q_total minus the sum of attributed 1/q_i; absent when q_total is.
  std::optional<double> unattributed_loss() const;
};

void check_invariants(const LossBudget& budget);

/// Parses the qubit dataset CSV (columns in boundary units:
/// nm, GHz, us, Q in units of 1e6). Throws ParseError naming the line.
std::vector<QubitRecord> parse_qubit_table(std::istream& in);
std::vector<QubitRecord> load_qubit_table(const std::string& path);

/// Writes records in the same column layout parse_qubit_table() reads.
void write_qubit_table(std::ostream& out, const std::vector<QubitRecord>& records);

/// Location of the bundled dataset (build tree or install prefix).
std::string bundled_qubit_table_path();

}  // namespace cpwloss
