#include "cpwloss/types.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/units.hpp"

#ifndef CPWLOSS_SOURCE_DATA_DIR
#define CPWLOSS_SOURCE_DATA_DIR ""
#endif
#ifndef CPWLOSS_INSTALL_DATA_DIR
#define CPWLOSS_INSTALL_DATA_DIR ""
#endif

namespace cpwloss {

namespace {

std::string describe(double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

ComplexTrace validate_trace(ComplexTrace trace) {
  const auto n = trace.frequencies.size();
  if (n < kMinTracePoints) {
    throw ValidationError("too few points: trace has " + std::to_string(n) + ", need at least " +
                          std::to_string(kMinTracePoints));
  }
  if (trace.s21.size() != n) {
    throw ValidationError("s21 length " + std::to_string(trace.s21.size()) +
                          " does not match frequency length " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(trace.frequencies[i])) {
      throw ValidationError("non-finite frequency at index " + std::to_string(i) + ": " +
                            describe(trace.frequencies[i]));
    }
    if (i > 0 && !(trace.frequencies[i] > trace.frequencies[i - 1])) {
      throw ValidationError("frequencies not strictly increasing at index " + std::to_string(i) +
                            ": " + describe(trace.frequencies[i]));
    }
    if (!finite(trace.s21[i])) {
      throw ValidationError("non-finite s21 at index " + std::to_string(i) + ": (" +
                            describe(trace.s21[i].real()) + ", " + describe(trace.s21[i].imag()) +
                            ")");
    }
  }
  if (!(trace.line_attenuation_db >= 0.0)) {
    throw ValidationError("line attenuation must be >= 0 dB, got " +
                          describe(trace.line_attenuation_db));
  }
  return trace;
}

double diameter_corrected_qi(double ql, double qc_mag, double phi) {
  const double inverse = 1.0 / ql - std::cos(phi) / qc_mag;
  return 1.0 / inverse;
}

ResonatorFitResult make_resonator_fit(double fr, double ql, double qc_mag, double phi,
                                      double tau, double a, double alpha) {
  ResonatorFitResult fit;
  fit.fr = fr;
  fit.ql = ql;
  fit.qc_mag = qc_mag;
  fit.phi = phi;
  fit.tau = tau;
  fit.a = a;
  fit.alpha = alpha;
  fit.qi = diameter_corrected_qi(ql, qc_mag, phi);
  check_invariants(fit);
  return fit;
}

void check_invariants(const ResonatorFitResult& fit) {
  if (!(fit.ql > 0.0) || !std::isfinite(fit.ql)) {
    throw ValidationError("Ql must be positive, got " + describe(fit.ql));
  }
  if (!(fit.qc_mag > 0.0) || !std::isfinite(fit.qc_mag)) {
    throw ValidationError("|Qc| must be positive, got " + describe(fit.qc_mag));
  }
  if (!(std::abs(fit.phi) < units::kPi / 2)) {
    throw ValidationError("|phi| must be below pi/2, got " + describe(fit.phi));
  }
  if (!(fit.qi > 0.0) || !std::isfinite(fit.qi)) {
    throw ValidationError("unphysical Qi (non-positive): " + describe(fit.qi));
  }
  const double lhs = 1.0 / fit.qi;
  const double rhs = 1.0 / fit.ql - std::cos(fit.phi) / fit.qc_mag;
  const double scale = 1.0 / fit.ql + 1.0 / fit.qc_mag;
  if (std::abs(lhs - rhs) > 1e-12 * scale) {
    throw ValidationError("diameter-correction identity violated");
  }
}

void check_invariants(const TlsFitResult& fit) {
  if (!(fit.f_delta_tls >= 0.0)) throw ValidationError("F*delta_TLS must be >= 0");
  if (!(fit.n_c > 0.0)) throw ValidationError("n_c must be > 0");
  if (!(fit.beta > 0.0 && fit.beta <= 1.0)) throw ValidationError("beta must lie in (0, 1]");
  if (!(fit.delta0 >= 0.0)) throw ValidationError("delta0 must be >= 0");
}

long QubitRecord::thickness_nm() const { return std::lround(units::to_nm(film_thickness)); }

void check_invariants(const QubitRecord& record) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError(record.label + ": " + what);
  };
  if (!(record.f_q > 0.0)) fail("f_q must be positive");
  if (!(record.f_r > 0.0)) fail("f_r must be positive");
  if (!(record.t1_mean > 0.0)) fail("t1_mean must be positive");
  // Table values carry three decimals in GHz.
  if (std::abs(std::abs(record.f_q - record.f_r) - record.detuning) > units::ghz(0.001) * (1 + 1e-9)) {
    fail("detuning differs from |f_q - f_r| by more than 1 MHz");
  }
  const double q = units::kTwoPi * record.f_q * record.t1_mean;
  if (std::abs(q - record.q_factor) > kPrintedQTolerance * record.q_factor) {
    fail("Q = 2*pi*f_q*T1 = " + describe(q) + " inconsistent with printed " +
         describe(record.q_factor));
  }
}

std::optional<double> LossBudget::unattributed_loss() const {
  if (!q_total) return std::nullopt;
  double loss = 1.0 / *q_total;
  for (const auto& q : {q_tls, q_purcell, q_other}) {
    if (q) loss -= 1.0 / *q;
  }
  return loss;
}

void check_invariants(const LossBudget& budget) {
  for (const auto& q : {budget.q_total, budget.q_tls, budget.q_purcell, budget.q_other}) {
    if (q && !(*q > 0.0)) throw ValidationError("quality factors must be positive");
  }
  if (const auto rest = budget.unattributed_loss(); rest && *rest < -1e-12 / *budget.q_total) {
    throw ValidationError("attributed loss exceeds total loss");
  }
}

namespace {

constexpr const char* kQubitColumns[] = {
    "label",         "film_thickness_nm", "f_q_ghz",       "f_r_ghz",
    "detuning_ghz",  "t1_mean_us",        "t1_std_us",     "t2echo_mean_us",
    "t2echo_std_us", "t_purcell_us",      "q_factor_1e6",  "included"};

bool parse_bool(std::string_view text, std::size_t line) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("line " + std::to_string(line) + ": not a boolean: '" + std::string(text) + "'");
}

std::optional<double> parse_optional(std::string_view text, std::size_t line) {
  if (text.empty() || text == "-" || text == "NA") return std::nullopt;
  return io::parse_double(text, line);
}

}  // namespace

std::vector<QubitRecord> parse_qubit_table(std::istream& in) {
  const auto table = io::read_csv(in);
  if (table.header.empty()) throw ParseError("empty qubit dataset");
  std::size_t col[std::size(kQubitColumns)];
  for (std::size_t i = 0; i < std::size(kQubitColumns); ++i) {
    col[i] = table.require_column(kQubitColumns[i]);
  }
  std::vector<QubitRecord> records;
  records.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const auto& c = row.cells;
    const auto num = [&](int i) { return io::parse_double(c[col[i]], row.line); };
    QubitRecord r;
    r.label = c[col[0]];
    if (r.label.empty()) throw ParseError("line " + std::to_string(row.line) + ": empty label");
    r.film_thickness = units::nm(num(1));
    r.f_q = units::ghz(num(2));
    r.f_r = units::ghz(num(3));
    r.detuning = units::ghz(num(4));
    r.t1_mean = units::us(num(5));
    r.t1_std = units::us(num(6));
    if (auto v = parse_optional(c[col[7]], row.line)) r.t2echo_mean = units::us(*v);
    if (auto v = parse_optional(c[col[8]], row.line)) r.t2echo_std = units::us(*v);
    r.t_purcell = units::us(num(9));
    r.q_factor = num(10) * 1e6;
    r.included = parse_bool(c[col[11]], row.line);
    try {
      check_invariants(r);
    } catch (const ValidationError& e) {
      throw ParseError("line " + std::to_string(row.line) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ParseError("qubit dataset has no rows");
  return records;
}

std::vector<QubitRecord> load_qubit_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return parse_qubit_table(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_qubit_table(std::ostream& out, const std::vector<QubitRecord>& records) {
  for (std::size_t i = 0; i < std::size(kQubitColumns); ++i) {
    out << (i ? "," : "") << kQubitColumns[i];
  }
  out << '\n';
  const auto f = [](double v) { return io::format_double(v); };
  for (const auto& r : records) {
    out << r.label << ',' << r.thickness_nm() << ',' << f(units::to_ghz(r.f_q)) << ','
        << f(units::to_ghz(r.f_r)) << ',' << f(units::to_ghz(r.detuning)) << ','
        << f(units::to_us(r.t1_mean)) << ',' << f(units::to_us(r.t1_std)) << ','
        << (r.t2echo_mean ? f(units::to_us(*r.t2echo_mean)) : "") << ','
        << (r.t2echo_std ? f(units::to_us(*r.t2echo_std)) : "") << ','
        << f(units::to_us(r.t_purcell)) << ',' << f(r.q_factor / 1e6) << ','
        << (r.included ? "true" : "false") << '\n';
  }
}

std::string bundled_qubit_table_path() {
  namespace fs = std::filesystem;
  for (const char* dir : {CPWLOSS_SOURCE_DATA_DIR, CPWLOSS_INSTALL_DATA_DIR}) {
    const fs::path candidate = fs::path(dir) / "qubits_table2.csv";
    if (*dir && fs::exists(candidate)) return candidate.string();
  }
  return "qubits_table2.csv";
}

}  // namespace cpwloss
