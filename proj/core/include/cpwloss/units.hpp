#pragma once

// Internal unit system is SI (Hz, s, W, K, m). Boundary formats use GHz, us,
// dBm and nm and convert through the helpers below.

#include <cmath>
#include <numbers>

namespace cpwloss::units {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kHbar = 1.054571817e-34;       // J s
inline constexpr double kBoltzmann = 1.380649e-23;     // J / K
inline constexpr double kEpsilon0 = 8.8541878128e-12;  // F / m

constexpr double ghz(double value) { return value * 1e9; }
constexpr double to_ghz(double hz) { return hz * 1e-9; }
constexpr double us(double value) { return value * 1e-6; }
constexpr double to_us(double s) { return s * 1e6; }
constexpr double nm(double value) { return value * 1e-9; }
constexpr double to_nm(double m) { return m * 1e9; }
constexpr double um(double value) { return value * 1e-6; }
constexpr double to_um(double m) { return m * 1e6; }
constexpr double mm(double value) { return value * 1e-3; }

constexpr double angular(double frequency_hz) { return kTwoPi * frequency_hz; }

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

}  // namespace cpwloss::units
