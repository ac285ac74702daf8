#include "cpwloss/tls_model.hpp"

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

using units::kBoltzmann;
using units::kHbar;
using units::kTwoPi;

namespace {

constexpr double kFDeltaMax = 1e-3;
constexpr double kNcMin = 1e-3;
constexpr double kNcMax = 1e9;
constexpr double kBetaMin = 0.05;
constexpr double kBetaMax = 1.0;
constexpr double kDelta0Max = 1e-3;

double thermal_factor(double fr, double temperature) {
  return std::tanh(kHbar * kTwoPi * fr / (2.0 * kBoltzmann * temperature));
}

double model_loss(double f_delta, double n_c, double beta, double delta0, double thermal,
                  double n) {
  return f_delta * thermal / std::pow(1.0 + n / n_c, beta) + delta0;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += (x - mean) * (x - mean);
  return std::sqrt(sum / static_cast<double>(v.size() - 1));
}

}  // namespace

void check_invariants(const CalibrationContext& ctx) {
  if (!(ctx.z0 > 0.0)) throw ValidationError("calibration: z0 must be > 0");
  if (!(ctx.zr > 0.0)) throw ValidationError("calibration: zr must be > 0");
  if (!(ctx.total_attenuation >= 0.0)) {
    throw ValidationError("calibration: total attenuation must be >= 0 dB");
  }
  if (!(ctx.temperature > 0.0)) throw ValidationError("calibration: temperature must be > 0");
}

double coupling_q(double qc_mag, double phi, CouplingQ convention) {
  return convention == CouplingQ::kMagnitude ? qc_mag : qc_mag / std::cos(phi);
}

double photon_number(double p_in, double fr, double ql, double qc, const CalibrationContext& ctx) {
  check_invariants(ctx);
  if (!(p_in >= 0.0) || !(fr > 0.0) || !(ql > 0.0) || !(qc > 0.0)) {
    throw ValidationError("photon_number: inputs must be positive");
  }
  const double omega = kTwoPi * fr;
  return 2.0 * (ctx.z0 / ctx.zr) * (ql * ql / qc) * p_in / (kHbar * omega * omega);
}

double dbm_to_device_watts(double applied_power_dbm, double total_attenuation_db) {
  return std::pow(10.0, (applied_power_dbm - total_attenuation_db - 30.0) / 10.0);
}

PowerSweepPoint make_sweep_point(const ResonatorFitResult& fit, double applied_power_dbm,
                                 const CalibrationContext& ctx, CouplingQ convention) {
  PowerSweepPoint point;
  point.fit = fit;
  point.p_in = dbm_to_device_watts(applied_power_dbm, ctx.total_attenuation);
  point.n_photons =
      photon_number(point.p_in, fit.fr, fit.ql, coupling_q(fit.qc_mag, fit.phi, convention), ctx);
  return point;
}

double ResonatorSweepRecord::frequency() const {
  std::vector<double> f;
  f.reserve(points.size());
  for (const auto& p : points) f.push_back(p.fit.fr);
  return median(std::move(f));
}

void check_invariants(const ResonatorSweepRecord& record) {
  if (record.points.size() < kMinSweepPoints) {
    throw ValidationError("sweep " + record.label + ": needs at least " +
                          std::to_string(kMinSweepPoints) + " points, got " +
                          std::to_string(record.points.size()));
  }
  for (std::size_t i = 0; i < record.points.size(); ++i) {
    const auto& p = record.points[i];
    if (!(p.n_photons >= 0.0) || !(p.fit.qi > 0.0) || !std::isfinite(p.fit.qi)) {
      throw ValidationError("sweep " + record.label + ": invalid point at index " +
                            std::to_string(i));
    }
    if (i > 0 && !(p.n_photons > record.points[i - 1].n_photons)) {
      throw ValidationError("sweep " + record.label +
                            ": points must be strictly increasing in n (index " +
                            std::to_string(i) + ")");
    }
  }
}

double tls_qi_model(const TlsFitResult& params, double n, double fr) {
  return 1.0 / model_loss(params.f_delta_tls, params.n_c, params.beta, params.delta0,
                          thermal_factor(fr, params.temperature), n);
}

TlsFitResult fit_tls(const ResonatorSweepRecord& input, double fr, double temperature,
                     const TlsFitOptions& options) {
  ResonatorSweepRecord sweep = input;
  std::sort(sweep.points.begin(), sweep.points.end(),
            [](const auto& a, const auto& b) { return a.n_photons < b.n_photons; });
  check_invariants(sweep);
  if (!(fr > 0.0) || !(temperature > 0.0)) {
    throw ValidationError("fit_tls: fr and temperature must be positive");
  }
  const auto& pts = sweep.points;
  const std::size_t m = pts.size();
  const double n_lo = std::max(pts.front().n_photons, std::numeric_limits<double>::min());
  const double n_hi = pts.back().n_photons;
  if (std::log10(n_hi / n_lo) < kMinSweepDecades) {
    throw FitError("sweep " + sweep.label + " spans fewer than " +
                   std::to_string(static_cast<int>(kMinSweepDecades)) +
                   " decades of <n>; n_c and beta are degenerate");
  }

  Eigen::VectorXd loss(m), weight(m), n(m);
  bool have_sigma = true;
  for (const auto& p : pts) have_sigma = have_sigma && p.fit.uncertainties.qi > 0.0;
  double q_min = std::numeric_limits<double>::infinity();
  double q_max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double qi = pts[i].fit.qi;
    q_min = std::min(q_min, qi);
    q_max = std::max(q_max, qi);
    loss[k] = 1.0 / qi;
    n[k] = pts[i].n_photons;
    weight[k] = have_sigma ? qi * qi / pts[i].fit.uncertainties.qi : 1.0;
  }
  // Uniform weights are normalised so residuals are O(1) either way.
  const double loss_scale = 1.0 / q_min;
  if (!have_sigma) weight.setConstant(1.0 / loss_scale);

  const double thermal = thermal_factor(fr, temperature);
  // Internal parameters: [F delta / loss_scale, ln n_c, beta, delta0 / loss_scale].
  const lsq::ResidualFn residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const double nc = std::exp(x[1]);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
      r[i] = weight[i] *
             (model_loss(x[0] * loss_scale, nc, x[2], x[3] * loss_scale, thermal, n[i]) - loss[i]);
    }
  };
  lsq::Options lsq_options;
  lsq_options.max_iterations = options.max_iterations;
  lsq_options.lower = Eigen::Vector4d(0.0, std::log(kNcMin), kBetaMin, 0.0);
  lsq_options.upper = Eigen::Vector4d(kFDeltaMax / loss_scale, std::log(kNcMax), kBetaMax,
                                      kDelta0Max / loss_scale);
  lsq_options.typical = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0);

  const double delta0_guess = 1.0 / q_max;
  const double f_delta_guess = std::max((1.0 / q_min - delta0_guess) / thermal, 0.0);
  const auto start = [&](double nc, double beta) {
    return Eigen::Vector4d(f_delta_guess / loss_scale, std::log(nc), beta,
                           delta0_guess / loss_scale);
  };

  // Noise floor of the weighted data from second differences; a smooth model
  // contributes little to them on a log-spaced sweep.
  double noise_floor = 0.0;
  if (m >= 3) {
    std::vector<double> d2;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      d2.push_back(std::abs(weight[k + 1] * loss[k + 1] - 2.0 * weight[k] * loss[k] +
                            weight[k - 1] * loss[k - 1]));
    }
    noise_floor = 1.4826 * median(std::move(d2)) / std::sqrt(6.0);
  }

  int starts = 1;
  auto best = lsq::levenberg_marquardt(residuals, static_cast<Eigen::Index>(m),
                                       start(std::sqrt(n_lo * n_hi), 0.3), lsq_options);
  if (!best.converged || best.rms() > options.restart_factor * noise_floor) {
    const std::array<double, 2> betas{0.15, 0.6};
    for (int a = 0; a < 4; ++a) {
      const double nc = n_lo * std::pow(n_hi / n_lo, (a + 0.5) / 4.0);
      for (double beta : betas) {
        ++starts;
        auto trial = lsq::levenberg_marquardt(residuals, static_cast<Eigen::Index>(m),
                                              start(std::clamp(nc, kNcMin, kNcMax), beta),
                                              lsq_options);
        const bool better = (trial.converged && !best.converged) ||
                            (trial.converged == best.converged && trial.cost < best.cost);
        if (better) best = std::move(trial);
      }
    }
  }
  if (!best.converged) throw FitError("TLS fit did not converge: " + best.message);

  const auto se = best.standard_errors();
  TlsFitResult out;
  out.f_delta_tls = best.params[0] * loss_scale;
  out.n_c = std::exp(best.params[1]);
  out.beta = best.params[2];
  out.delta0 = best.params[3] * loss_scale;
  out.temperature = temperature;
  out.uncertainties.f_delta_tls = se[0] * loss_scale;
  out.uncertainties.n_c = se[1] * out.n_c;
  out.uncertainties.beta = se[2];
  out.uncertainties.delta0 = se[3] * loss_scale;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double d = model_loss(out.f_delta_tls, out.n_c, out.beta, out.delta0, thermal, n[k]) -
                     loss[k];
    sum += d * d;
  }
  out.residual_rms = std::sqrt(sum / static_cast<double>(m));
  out.iterations = best.iterations;
  out.starts = starts;
  check_invariants(out);
  return out;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    out[i] = lo * std::pow(hi / lo, t);
  }
  return out;
}

ResonatorSweepRecord synthesize_tls_sweep(const TlsFitResult& truth, double fr,
                                          std::span<const double> photon_numbers,
                                          double rel_noise, std::uint64_t seed) {
  check_invariants(truth);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ResonatorSweepRecord record;
  for (double nph : photon_numbers) {
    const double qi = tls_qi_model(truth, nph, fr) * (1.0 + rel_noise * noise(rng));
    PowerSweepPoint p;
    p.n_photons = nph;
    p.fit.fr = fr;
    p.fit.qi = qi;
    p.fit.uncertainties.qi = rel_noise * qi;
    record.points.push_back(p);
  }
  return record;
}

TlsAggregate aggregate_by_thickness(std::span<const ResonatorSweepRecord> records) {
  if (records.empty()) throw ValidationError("aggregate_by_thickness: no records");
  TlsAggregate out;
  std::map<long, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    if (!r.tls_fit) throw ValidationError("record " + r.label + " has no TLS fit");
    const long t = std::lround(units::to_nm(r.film_thickness));
    groups[t].first.push_back(r.tls_fit->f_delta_tls);
    groups[t].second.push_back(r.tls_fit->delta0);
    out.series.push_back({r.label, t, r.frequency(), r.tls_fit->f_delta_tls, r.tls_fit->delta0});
  }
  for (const auto& [t, values] : groups) {
    const auto& [fd, d0] = values;
    ThicknessGroup g;
    g.thickness_nm = t;
    g.count = fd.size();
    g.f_delta_mean = std::accumulate(fd.begin(), fd.end(), 0.0) / static_cast<double>(fd.size());
    g.delta0_mean = std::accumulate(d0.begin(), d0.end(), 0.0) / static_cast<double>(d0.size());
    g.f_delta_std = sample_std(fd, g.f_delta_mean);
    g.delta0_std = sample_std(d0, g.delta0_mean);
    out.groups.push_back(g);
  }
  return out;
}

std::vector<Delta0Series> delta0_spectrum(std::span<const ResonatorSweepRecord> records) {
  std::map<long, std::vector<std::pair<double, double>>> groups;
  for (const auto& r : records) {
    if (!r.tls_fit) throw ValidationError("record " + r.label + " has no TLS fit");
    groups[std::lround(units::to_nm(r.film_thickness))].emplace_back(r.frequency(),
                                                                      r.tls_fit->delta0);
  }
  std::vector<Delta0Series> out;
  for (auto& [t, pts] : groups) {
    std::sort(pts.begin(), pts.end());
    Delta0Series s;
    s.thickness_nm = t;
    double fy = 0.0;
    double ff = 0.0;
    for (const auto& [f, d] : pts) {
      s.frequencies.push_back(f);
      s.delta0.push_back(d);
      fy += f * d;
      ff += f * f;
    }
    s.slope_per_hz = ff > 0.0 ? fy / ff : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cpwloss
