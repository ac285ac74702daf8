#pragma once

// Power-dependent TLS loss of a resonator and the photon-number calibration
// that places each resonator fit on the <n> axis.
//
//   1/Qi(n) = F delta_TLS * tanh(hbar w / 2 k T) / (1 + n/n_c)^beta + delta0
//   <n>     = 2 (Z0/Zr) (Ql^2/Qc) P_in / (hbar w^2)

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpwloss/types.hpp"

namespace cpwloss {

struct CalibrationContext {
  double z0 = 50.0;                // ohm, feedline
  double zr = 50.0;                // ohm, resonator
  double total_attenuation = 0.0;  // dB, instrument to device input
  double temperature = 0.01;       // K
};

void check_invariants(const CalibrationContext& ctx);

/// Which coupling Q enters the photon-number formula.
enum class CouplingQ {
  kMagnitude,          // |Qc|
  kDiameterCorrected,  // |Qc| / cos(phi)
};

double coupling_q(double qc_mag, double phi, CouplingQ convention);

double photon_number(double p_in, double fr, double ql, double qc, const CalibrationContext& ctx);

/// P_in = 10^((P_dBm - att - 30)/10) W.
double dbm_to_device_watts(double applied_power_dbm, double total_attenuation_db);

/// Calibrated sweep point from a resonator fit measured at `applied_power_dbm`.
PowerSweepPoint make_sweep_point(const ResonatorFitResult& fit, double applied_power_dbm,
                                 const CalibrationContext& ctx,
                                 CouplingQ convention = CouplingQ::kMagnitude);

struct ResonatorSweepRecord {
  std::string label;
  double film_thickness = 0.0;  // m
  std::vector<PowerSweepPoint> points;
  std::optional<TlsFitResult> tls_fit;

  /// Median resonance frequency across the sweep's fits.
  double frequency() const;
};

inline constexpr std::size_t kMinSweepPoints = 5;
inline constexpr double kMinSweepDecades = 3.0;

/// Points strictly increasing in n, at least kMinSweepPoints of them.
void check_invariants(const ResonatorSweepRecord& record);

/// Internal Q predicted by the TLS model at photon number n.
double tls_qi_model(const TlsFitResult& params, double n, double fr);

struct TlsFitOptions {
  int max_iterations = 400;
  /// Residual above this multiple of the noise floor triggers the multi-start.
  double restart_factor = 3.0;
};

/// Weighted least squares of 1/Qi against <n>. Weights come from the fits'
/// Qi uncertainties when every point carries one, else they are uniform.
/// Points are sorted by n before fitting.
TlsFitResult fit_tls(const ResonatorSweepRecord& sweep, double fr, double temperature,
                     const TlsFitOptions& options = {});

/// Noisy synthetic sweep: Qi from tls_qi_model times (1 + rel_noise * N(0,1)).
/// Each point's Qi uncertainty is set to rel_noise * Qi.
ResonatorSweepRecord synthesize_tls_sweep(const TlsFitResult& truth, double fr,
                                          std::span<const double> photon_numbers,
                                          double rel_noise, std::uint64_t seed);

std::vector<double> log_spaced(double lo, double hi, std::size_t count);

struct ThicknessGroup {
  long thickness_nm = 0;
  std::size_t count = 0;
  double f_delta_mean = 0.0;
  double f_delta_std = 0.0;  // sample standard deviation, 0 for one record
  double delta0_mean = 0.0;
  double delta0_std = 0.0;
};

struct TlsSeriesPoint {
  std::string label;
  long thickness_nm = 0;
  double frequency = 0.0;  // Hz
  double f_delta_tls = 0.0;
  double delta0 = 0.0;
};

struct TlsAggregate {
  std::vector<ThicknessGroup> groups;  // ascending thickness
  std::vector<TlsSeriesPoint> series;  // input order
};

/// Throws ValidationError on empty input or a record without a fit.
TlsAggregate aggregate_by_thickness(std::span<const ResonatorSweepRecord> records);

struct Delta0Series {
  long thickness_nm = 0;
  std::vector<double> frequencies;  // ascending
  std::vector<double> delta0;
  /// Least-squares slope of delta0 = k * f through the origin, per Hz.
  double slope_per_hz = 0.0;
};

std::vector<Delta0Series> delta0_spectrum(std::span<const ResonatorSweepRecord> records);

}  // namespace cpwloss
