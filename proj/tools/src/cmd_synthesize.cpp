#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "context.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/io/trace_io.hpp"
#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/resonance_fit.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss::cli {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Kind : std::uint64_t { kNotch = 1, kTls = 2, kDecay = 3 };

// Independent stream per item, so adding items never reshuffles earlier ones.
std::uint64_t item_seed(std::uint64_t seed, Kind kind, std::size_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(kind) << 32 | index));
}

std::string numbered(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, i, ext);
  return buf;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log10(lo), std::log10(hi));
  return std::pow(10.0, u(rng));
}

nlohmann::json synth_notch(Context& ctx, const SynthesizeArgs& args) {
  const double sigma = args.noise >= 0.0 ? args.noise : 1e-3;
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < args.count; ++i) {
    const std::uint64_t seed = item_seed(ctx.config.seed, Kind::kNotch, i);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NotchModelParams p;
    p.fr = units::ghz(4.0 + 4.0 * u(rng));
    const double qi = log_uniform(rng, 1e5, 5e6);
    p.qc_mag = log_uniform(rng, 5e4, 1e6);
    p.phi = -0.3 + 0.6 * u(rng);
    p.ql = 1.0 / (1.0 / qi + std::cos(p.phi) / p.qc_mag);
    p.a = 0.5 + u(rng);
    p.alpha = -units::kPi + units::kTwoPi * u(rng);
    p.tau = 60e-9 * u(rng);
    auto trace = synthesize_notch(p, linewidth_grid(p.fr, p.ql, 8.0, 801), sigma, seed);
    trace.applied_power_dbm = -60.0;
    trace.line_attenuation_db = ctx.config.calibration.total_attenuation;
    trace.temperature = ctx.config.calibration.temperature;
    const bool s2p = args.format == "s2p";
    const auto name = numbered("trace", i, s2p ? ".s2p" : ".csv");
    ctx.emit(fs::path("notch") / name, s2p ? io::format_touchstone(trace) : io::format_trace_csv(trace));
    items.push_back({{"file", "notch/" + name}, {"seed", seed}, {"params", p}, {"qi", qi}});
  }
  return {{"noise_sigma", sigma}, {"items", items}};
}

struct ThicknessTruth {
  long nm;
  double f_delta;
};
constexpr std::array<ThicknessTruth, 3> kTlsPopulation{{{150, 1e-6}, {300, 8e-7}, {500, 5e-7}}};

nlohmann::json synth_tls(Context& ctx, const SynthesizeArgs& args) {
  const double rel_noise = args.noise >= 0.0 ? args.noise : 0.02;
  const auto& cal = ctx.config.calibration;
  const double qc = 2e5;
  const auto n_values = log_spaced(1.0, 1e7, 25);
  std::ostringstream csv;
  csv << "label,film_thickness_nm,applied_power_dbm,fr,qi,qc_mag,phi,qi_err\n";
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < args.count; ++i) {
    const std::uint64_t seed = item_seed(ctx.config.seed, Kind::kTls, i);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& group = kTlsPopulation[i % kTlsPopulation.size()];
    TlsFitResult truth;
    truth.f_delta_tls = group.f_delta;
    truth.n_c = 10.0;
    truth.beta = 0.3;
    truth.delta0 = 2e-7;
    truth.temperature = cal.temperature;
    const double fr = units::ghz(4.0 + 4.0 * u(rng));
    const auto sweep = synthesize_tls_sweep(truth, fr, n_values, rel_noise, seed);
    const std::string label = numbered("res", i, "");
    for (const auto& pt : sweep.points) {
      // Invert the photon-number calibration so the fit command lands on pt.n_photons.
      const double ql = 1.0 / (1.0 / pt.fit.qi + 1.0 / qc);
      const double omega = units::angular(fr);
      const double p_in =
          pt.n_photons * units::kHbar * omega * omega / (2.0 * (cal.z0 / cal.zr) * ql * ql / qc);
      const double dbm = units::watts_to_dbm(p_in) + cal.total_attenuation;
      csv << label << ',' << group.nm << ',' << io::format_double(dbm) << ','
          << io::format_double(fr) << ',' << io::format_double(pt.fit.qi) << ','
          << io::format_double(qc) << ",0," << io::format_double(pt.fit.uncertainties.qi) << '\n';
    }
    items.push_back({{"label", label},
                     {"thickness_nm", group.nm},
                     {"frequency", fr},
                     {"seed", seed},
                     {"truth", truth}});
  }
  ctx.emit("tls/manifest.csv", csv.str());
  return {{"manifest", "tls/manifest.csv"},
          {"relative_noise", rel_noise},
          {"photon_numbers", n_values},
          {"items", items}};
}

nlohmann::json synth_decay(Context& ctx, const SynthesizeArgs& args) {
  const double sigma = args.noise >= 0.0 ? args.noise : 0.01;
  std::vector<double> delays;
  for (int k = 0; k < 40; ++k) delays.push_back(units::us(1500.0) * k / 39.0);
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < args.count; ++i) {
    const std::uint64_t seed = item_seed(ctx.config.seed, Kind::kDecay, i);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> t1_dist(270.0, 83.0);
    const double t1 = units::us(std::max(50.0, t1_dist(rng)));
    auto trace = synthesize_decay(t1, 0.9, 0.05, delays, sigma, seed);
    trace.timestamp = 60.0 * static_cast<double>(i);
    const auto name = numbered("decay", i, ".csv");
    ctx.emit(fs::path("decay") / name, io::format_decay_csv(trace));
    items.push_back({{"file", "decay/" + name},
                     {"seed", seed},
                     {"t1", t1},
                     {"amplitude", 0.9},
                     {"offset", 0.05}});
  }
  return {{"noise_sigma", sigma}, {"items", items}};
}

}  // namespace

int cmd_synthesize(Context& ctx, const SynthesizeArgs& args) {
  io::StageTimer timer(ctx.manifest, "synthesize");
  const bool all = args.kind == "all";
  nlohmann::json truth{{"seed", ctx.config.seed}, {"count", args.count}};
  if (all || args.kind == "notch") truth["notch"] = synth_notch(ctx, args);
  if (all || args.kind == "tls") truth["tls"] = synth_tls(ctx, args);
  if (all || args.kind == "decay") truth["decay"] = synth_decay(ctx, args);
  ctx.emit_json("truth.json", truth);
  ctx.info("synthesize: wrote " + std::to_string(ctx.manifest.artifacts.size()) + " files to " +
           ctx.out.string());
  return kExitOk;
}

}  // namespace cpwloss::cli
