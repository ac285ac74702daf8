#include "cpwloss/qubit_loss.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "cpwloss/error.hpp"
#include "cpwloss/least_squares.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {

using units::kTwoPi;

void check_invariants(const DecayTrace& trace) {
  if (trace.delays.size() != trace.population.size()) {
    throw ValidationError("decay trace: delays and population differ in length");
  }
  if (trace.delays.size() < kMinDecayPoints) {
    throw ValidationError("decay trace: too few points (" + std::to_string(trace.delays.size()) +
                          " < " + std::to_string(kMinDecayPoints) + ")");
  }
  for (std::size_t i = 0; i < trace.delays.size(); ++i) {
    if (!std::isfinite(trace.delays[i]) || !std::isfinite(trace.population[i])) {
      throw ValidationError("decay trace: non-finite value at index " + std::to_string(i));
    }
    if (trace.population[i] < -0.2 || trace.population[i] > 1.2) {
      throw ValidationError("decay trace: population outside [-0.2, 1.2] at index " +
                            std::to_string(i));
    }
    if (i > 0 && !(trace.delays[i] > trace.delays[i - 1])) {
      throw ValidationError("decay trace: delays not strictly increasing at index " +
                            std::to_string(i));
    }
  }
}

T1Fit fit_t1(const DecayTrace& trace) {
  check_invariants(trace);
  const std::size_t m = trace.delays.size();
  const double t0 = trace.delays.front();
  const double span = trace.delays.back() - t0;
  Eigen::VectorXd t(m), p(m);
  for (std::size_t i = 0; i < m; ++i) {
    t[static_cast<Eigen::Index>(i)] = trace.delays[i] - t0;
    p[static_cast<Eigen::Index>(i)] = trace.population[i];
  }

  const double b0 = (p[static_cast<Eigen::Index>(m - 1)] + p[static_cast<Eigen::Index>(m - 2)] +
                     p[static_cast<Eigen::Index>(m - 3)]) / 3.0;
  const double a0 = p[0] - b0;
  double t1_guess = 0.5 * span;
  if (a0 != 0.0) {
    for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(m); ++i) {
      if ((p[i] - b0) / a0 < std::exp(-1.0)) {
        t1_guess = std::max(t[i], 1e-3 * span);
        break;
      }
    }
  }

  // Internal parameters: [A, B, ln(T1/span)].
  const lsq::ResidualFn residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const double t1 = span * std::exp(x[2]);
    r = (x[0] * (-t.array() / t1).exp() + x[1] - p.array()).matrix();
  };
  lsq::Options options;
  options.lower = Eigen::Vector3d(-10.0, -10.0, std::log(1e-4));
  options.upper = Eigen::Vector3d(10.0, 10.0, std::log(1e3));
  options.typical = Eigen::Vector3d(1.0, 1.0, 1.0);
  const auto result = lsq::levenberg_marquardt(
      residuals, static_cast<Eigen::Index>(m),
      Eigen::Vector3d(a0, b0, std::log(t1_guess / span)), options);
  if (!result.converged) throw FitError("T1 fit did not converge: " + result.message);

  const auto se = result.standard_errors();
  T1Fit fit;
  fit.t1 = span * std::exp(result.params[2]);
  fit.t1_stderr = fit.t1 * se[2];
  fit.offset = result.params[1];
  fit.offset_stderr = se[1];
  // Refer the amplitude back to t = 0 of the original delay axis.
  const double shift = std::exp(t0 / fit.t1);
  fit.amplitude = result.params[0] * shift;
  fit.amplitude_stderr = se[0] * shift;
  fit.iterations = result.iterations;
  if (!(std::abs(result.params[0]) > 3.0 * se[0])) {
    throw FitError("T1 unresolvable: no significant decay amplitude");
  }
  if (fit.t1 > 100.0 * span) {
    throw FitError("T1 unresolvable: fitted T1 exceeds 100x the delay span");
  }
  return fit;
}

DecayTrace synthesize_decay(double t1, double amplitude, double offset,
                            std::span<const double> delays, double noise_sigma,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  DecayTrace trace;
  trace.delays.assign(delays.begin(), delays.end());
  for (double d : delays) {
    trace.population.push_back(amplitude * std::exp(-d / t1) + offset + noise_sigma * noise(rng));
  }
  return trace;
}

T1Statistics t1_statistics(std::span<const double> series, double bin_width) {
  if (series.empty()) throw ValidationError("t1_statistics: empty series");
  if (!(bin_width > 0.0)) throw ValidationError("t1_statistics: bin width must be > 0");
  T1Statistics stats;
  const auto n = static_cast<double>(series.size());
  stats.mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  if (series.size() > 1) {
    double sum = 0.0;
    for (double x : series) sum += (x - stats.mean) * (x - stats.mean);
    stats.std = std::sqrt(sum / (n - 1.0));
  }
  stats.histogram.bin_width = bin_width;
  // The small guard keeps values on a bin edge (100 us / 25 us) in the upper bin.
  const auto bin = [&](double x) {
    return static_cast<std::size_t>(std::floor(x / bin_width * (1.0 + 1e-12)));
  };
  for (double x : series) {
    if (x < 0.0) throw ValidationError("t1_statistics: negative T1");
  }
  stats.histogram.counts.assign(bin(*std::max_element(series.begin(), series.end())) + 1, 0);
  for (double x : series) ++stats.histogram.counts[bin(x)];
  return stats;
}

void check_invariants(const DispersiveParams& d) {
  if (!(d.f_r > 0.0) || !(d.f_q > 0.0) || !(d.q_loaded > 0.0)) {
    throw ValidationError("dispersive params: f_r, f_q and Ql must be positive");
  }
  if (!(d.chi >= 0.0)) throw ValidationError("dispersive params: chi must be >= 0");
  if (d.f_q == d.f_r) throw ValidationError("dispersive params: zero detuning");
}

double purcell_rate(const DispersiveParams& d) {
  check_invariants(d);
  const double kappa = kTwoPi * d.f_r / d.q_loaded;
  return kappa * (kTwoPi * d.chi) / std::abs(kTwoPi * (d.f_q - d.f_r));
}

double purcell_time(const DispersiveParams& d) {
  const double gamma = purcell_rate(d);
  return gamma > 0.0 ? 1.0 / gamma : std::numeric_limits<double>::infinity();
}

double chi_for_purcell_time(double f_r, double q_loaded, double f_q, double t_p) {
  if (!(t_p > 0.0)) throw ValidationError("chi_for_purcell_time: t_p must be > 0");
  const double kappa = kTwoPi * f_r / q_loaded;
  return std::abs(f_q - f_r) / (kappa * t_p);
}

double quality_factor(double f_q, double t1) {
  if (!(f_q > 0.0) || !(t1 >= 0.0)) throw ValidationError("quality_factor: invalid inputs");
  return kTwoPi * f_q * t1;
}

double tls_limited_q(double q, double t1, double t_p) {
  if (!(t1 >= 0.0) || !(t1 < t_p)) {
    throw ValidationError("tls_limited_q: requires 0 <= T1 < Tp");
  }
  return q / (1.0 - t1 / t_p);
}

ScreeningResult screen_qubit(const QubitRecord& record) {
  ScreeningResult out;
  if (record.t2echo_mean && *record.t2echo_mean > 2.0 * record.t1_mean) {
    out.included = false;
    out.reason = "T2echo > 2*T1";
  }
  if (record.t1_mean > record.t_purcell) {
    out.included = false;
    out.reason += (out.reason.empty() ? "" : "; ") + std::string("T1 > Tp");
  }
  return out;
}

LossBudget qubit_loss_budget(const QubitRecord& record) {
  LossBudget budget;
  budget.q_total = quality_factor(record.f_q, record.t1_mean);
  budget.q_purcell = kTwoPi * record.f_q * record.t_purcell;
  if (record.t1_mean < record.t_purcell) {
    budget.q_tls = tls_limited_q(*budget.q_total, record.t1_mean, record.t_purcell);
  }
  return budget;
}

const Fig1bGroup& Fig1bSummary::group(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw ValidationError("no Q summary group named " + name);
}

Fig1bSummary aggregate_fig1b(std::span<const QubitRecord> records) {
  Fig1bSummary summary;
  for (const auto& r : records) {
    Fig1bPoint point;
    point.label = r.label;
    point.thickness_nm = r.thickness_nm();
    point.t1_over_tp = r.t1_mean / r.t_purcell;
    point.q = quality_factor(r.f_q, r.t1_mean);
    if (r.t1_mean < r.t_purcell) point.q_tls = tls_limited_q(point.q, r.t1_mean, r.t_purcell);
    point.included = screen_qubit(r).included;
    summary.points.push_back(point);
  }

  std::map<long, std::vector<const Fig1bPoint*>> by_thickness;
  for (const auto& p : summary.points) {
    if (p.included) by_thickness[p.thickness_nm].push_back(&p);
  }
  if (by_thickness.empty()) throw ValidationError("aggregate_fig1b: no included records");

  const auto make_group = [](std::string name, const std::vector<const Fig1bPoint*>& members,
                             std::vector<long> thicknesses) {
    Fig1bGroup g;
    g.name = std::move(name);
    g.thickness_nm = std::move(thicknesses);
    double all = 0.0, half = 0.0, quarter = 0.0;
    for (const auto* p : members) {
      ++g.count;
      all += p->q;
      if (p->t1_over_tp <= 0.5) {
        ++g.count_half;
        half += p->q;
      }
      if (p->t1_over_tp <= 0.25) {
        ++g.count_quarter;
        quarter += p->q;
      }
    }
    g.mean_q = all / static_cast<double>(g.count);
    if (g.count_half) g.mean_q_half = half / static_cast<double>(g.count_half);
    if (g.count_quarter) g.mean_q_quarter = quarter / static_cast<double>(g.count_quarter);
    return g;
  };

  std::vector<const Fig1bPoint*> thicker;
  std::vector<long> thicker_nm;
  const long thinnest = by_thickness.begin()->first;
  for (const auto& [t, members] : by_thickness) {
    summary.groups.push_back(make_group(std::to_string(t) + " nm", members, {t}));
    if (t != thinnest) {
      thicker.insert(thicker.end(), members.begin(), members.end());
      thicker_nm.push_back(t);
    }
  }
  if (!thicker.empty()) {
    summary.groups.push_back(make_group("thicker", thicker, thicker_nm));
    std::vector<const Fig1bPoint*> all = by_thickness.begin()->second;
    all.insert(all.end(), thicker.begin(), thicker.end());
    std::vector<long> all_nm{thinnest};
    all_nm.insert(all_nm.end(), thicker_nm.begin(), thicker_nm.end());
    summary.groups.push_back(make_group("all", all, all_nm));
  }
  return summary;
}

}  // namespace cpwloss
