#pragma once

// Trace formats read and written by the command-line tool.
//
// Resonator CSV: header frequency_hz,re_s21,im_s21. Optional drive metadata
// rides in comment lines of the form "# key = value" with keys
// applied_power_dbm, line_attenuation_db and temperature_k.
//
// Touchstone: version 1 and 2 two-port files; S21 is extracted. Formats
// RI, MA and DB, frequency units Hz to GHz.
//
// Decay CSV: header delay_s,population.

#include <iosfwd>
#include <string>

#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/types.hpp"

namespace cpwloss::io {

ComplexTrace parse_trace_csv(std::istream& in);
std::string format_trace_csv(const ComplexTrace& trace);

ComplexTrace parse_touchstone(std::istream& in);
/// Two-port RI file in Hz with S21 = S12 and S11 = S22 = 0.
std::string format_touchstone(const ComplexTrace& trace);

/// Dispatches on the extension: .s2p is Touchstone, anything else CSV.
/// ParseError and ValidationError messages are prefixed with the path.
ComplexTrace read_trace(const std::string& path);

DecayTrace parse_decay_csv(std::istream& in);
std::string format_decay_csv(const DecayTrace& trace);
DecayTrace read_decay(const std::string& path);

}  // namespace cpwloss::io
