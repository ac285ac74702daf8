#include "cpwloss/io/json.hpp"

#include <initializer_list>
#include <string>

#include "cpwloss/error.hpp"

namespace cpwloss {

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// Reads the listed keys that are present; any other key is a typo and fails.
class Reader {
 public:
  Reader(const json& j, std::string what, std::initializer_list<const char*> keys)
      : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ValidationError(what_ + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw ValidationError(what_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(what_ + "." + key + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string what_;
};

}  // namespace

void to_json(json& j, const ResonatorFitResult& f) {
  const auto& u = f.uncertainties;
  j = json{{"fr", f.fr},
           {"ql", f.ql},
           {"qc_mag", f.qc_mag},
           {"phi", f.phi},
           {"qi", f.qi},
           {"tau", f.tau},
           {"a", f.a},
           {"alpha", f.alpha},
           {"uncertainties",
            {{"fr", u.fr}, {"ql", u.ql}, {"qc_mag", u.qc_mag}, {"phi", u.phi}, {"qi", u.qi},
             {"tau", u.tau}, {"a", u.a}, {"alpha", u.alpha}}},
           {"residual_rms", f.residual_rms},
           {"warnings", f.warnings}};
}

void to_json(json& j, const NotchModelParams& p) {
  j = json{{"fr", p.fr}, {"ql", p.ql},   {"qc_mag", p.qc_mag}, {"phi", p.phi},
           {"a", p.a},   {"alpha", p.alpha}, {"tau", p.tau}};
}

void from_json(const json& j, NotchModelParams& p) {
  Reader r(j, "notch parameters", {"fr", "ql", "qc_mag", "phi", "a", "alpha", "tau"});
  r.get("fr", p.fr);
  r.get("ql", p.ql);
  r.get("qc_mag", p.qc_mag);
  r.get("phi", p.phi);
  r.get("a", p.a);
  r.get("alpha", p.alpha);
  r.get("tau", p.tau);
}

void to_json(json& j, const TlsFitResult& f) {
  const auto& u = f.uncertainties;
  j = json{{"f_delta_tls", f.f_delta_tls},
           {"n_c", f.n_c},
           {"beta", f.beta},
           {"delta0", f.delta0},
           {"temperature", f.temperature},
           {"uncertainties",
            {{"f_delta_tls", u.f_delta_tls}, {"n_c", u.n_c}, {"beta", u.beta}, {"delta0", u.delta0}}},
           {"residual_rms", f.residual_rms},
           {"iterations", f.iterations},
           {"starts", f.starts}};
}

void from_json(const json& j, TlsFitResult& f) {
  Reader r(j, "TLS parameters",
           {"f_delta_tls", "n_c", "beta", "delta0", "temperature", "uncertainties", "residual_rms",
            "iterations", "starts"});
  r.get("f_delta_tls", f.f_delta_tls);
  r.get("n_c", f.n_c);
  r.get("beta", f.beta);
  r.get("delta0", f.delta0);
  r.get("temperature", f.temperature);
}

void to_json(json& j, const ThicknessGroup& g) {
  j = json{{"thickness_nm", g.thickness_nm}, {"count", g.count},
           {"f_delta_mean", g.f_delta_mean}, {"f_delta_std", g.f_delta_std},
           {"delta0_mean", g.delta0_mean},   {"delta0_std", g.delta0_std}};
}

void to_json(json& j, const TlsAggregate& agg) {
  j = json{{"groups", agg.groups}, {"series", json::array()}};
  for (const auto& p : agg.series) {
    j["series"].push_back({{"label", p.label},
                           {"thickness_nm", p.thickness_nm},
                           {"frequency", p.frequency},
                           {"f_delta_tls", p.f_delta_tls},
                           {"delta0", p.delta0}});
  }
}

void to_json(json& j, const QubitRecord& r) {
  j = json{{"label", r.label},
           {"film_thickness", r.film_thickness},
           {"f_q", r.f_q},
           {"f_r", r.f_r},
           {"detuning", r.detuning},
           {"t1_mean", r.t1_mean},
           {"t1_std", r.t1_std},
           {"t2echo_mean", opt(r.t2echo_mean)},
           {"t2echo_std", opt(r.t2echo_std)},
           {"t_purcell", r.t_purcell},
           {"q_factor", r.q_factor},
           {"included", r.included}};
}

void to_json(json& j, const LossBudget& b) {
  j = json{{"q_total", opt(b.q_total)},
           {"q_tls", opt(b.q_tls)},
           {"q_purcell", opt(b.q_purcell)},
           {"q_other", opt(b.q_other)},
           {"unattributed_loss", opt(b.unattributed_loss())}};
}

void to_json(json& j, const ScreeningResult& s) {
  j = json{{"included", s.included}, {"reason", s.reason}};
}

void to_json(json& j, const Fig1bGroup& g) {
  j = json{{"name", g.name},
           {"thickness_nm", g.thickness_nm},
           {"count", g.count},
           {"mean_q", g.mean_q},
           {"count_half", g.count_half},
           {"mean_q_half", opt(g.mean_q_half)},
           {"count_quarter", g.count_quarter},
           {"mean_q_quarter", opt(g.mean_q_quarter)}};
}

void to_json(json& j, const Fig1bSummary& s) {
  j = json{{"groups", s.groups}, {"points", json::array()}};
  for (const auto& p : s.points) {
    j["points"].push_back({{"label", p.label},
                           {"thickness_nm", p.thickness_nm},
                           {"t1_over_tp", p.t1_over_tp},
                           {"q", p.q},
                           {"q_tls", opt(p.q_tls)},
                           {"included", p.included}});
  }
}

void to_json(json& j, const T1Fit& f) {
  j = json{{"t1", f.t1},
           {"t1_stderr", f.t1_stderr},
           {"amplitude", f.amplitude},
           {"amplitude_stderr", f.amplitude_stderr},
           {"offset", f.offset},
           {"offset_stderr", f.offset_stderr},
           {"iterations", f.iterations}};
}

void to_json(json& j, const T1Statistics& s) {
  j = json{{"mean", s.mean},
           {"std", s.std},
           {"histogram",
            {{"origin", s.histogram.origin},
             {"bin_width", s.histogram.bin_width},
             {"counts", s.histogram.counts}}}};
}

void to_json(json& j, const CalibrationContext& c) {
  j = json{{"z0", c.z0},
           {"zr", c.zr},
           {"total_attenuation", c.total_attenuation},
           {"temperature", c.temperature}};
}

void from_json(const json& j, CalibrationContext& c) {
  Reader r(j, "calibration", {"z0", "zr", "total_attenuation", "temperature"});
  r.get("z0", c.z0);
  r.get("zr", c.zr);
  r.get("total_attenuation", c.total_attenuation);
  r.get("temperature", c.temperature);
}

void to_json(json& j, const CpwGeometry& g) {
  j = json{{"w", g.w},
           {"gap", g.gap},
           {"t_metal", g.t_metal},
           {"t_substrate", g.t_substrate},
           {"air_height", g.air_height},
           {"t_sm", g.t_sm},
           {"t_ma", g.t_ma},
           {"t_sa", g.t_sa},
           {"corner_extent", g.corner_extent},
           {"domain_width", g.domain_width}};
}

void from_json(const json& j, CpwGeometry& g) {
  Reader r(j, "geometry",
           {"w", "gap", "t_metal", "t_substrate", "air_height", "t_sm", "t_ma", "t_sa",
            "corner_extent", "domain_width"});
  r.get("w", g.w);
  r.get("gap", g.gap);
  r.get("t_metal", g.t_metal);
  r.get("t_substrate", g.t_substrate);
  r.get("air_height", g.air_height);
  r.get("t_sm", g.t_sm);
  r.get("t_ma", g.t_ma);
  r.get("t_sa", g.t_sa);
  r.get("corner_extent", g.corner_extent);
  r.get("domain_width", g.domain_width);
}

void to_json(json& j, const MaterialTable& m) {
  j = json::object();
  for (auto reg : kAllRegions) {
    j[region_name(reg)] = {{"eps_r", m[reg].eps_r}, {"tan_delta", m[reg].tan_delta}};
  }
}

void from_json(const json& j, MaterialTable& m) {
  if (!j.is_object()) throw ValidationError("materials: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const Region reg = region_from_name(key);
    Reader r(value, "materials." + key, {"eps_r", "tan_delta"});
    r.get("eps_r", m[reg].eps_r);
    r.get("tan_delta", m[reg].tan_delta);
  }
}

void to_json(json& j, const MeshOptions& o) {
  j = json{{"growth", o.growth},
           {"feature_size", o.feature_size},
           {"min_level", o.min_level},
           {"max_level", o.max_level},
           {"convergence_tol", o.convergence_tol},
           {"significant", o.significant},
           {"fixed_level", opt(o.fixed_level)}};
}

void from_json(const json& j, MeshOptions& o) {
  Reader r(j, "mesh",
           {"growth", "feature_size", "min_level", "max_level", "convergence_tol", "significant",
            "fixed_level"});
  r.get("growth", o.growth);
  r.get("feature_size", o.feature_size);
  r.get("min_level", o.min_level);
  r.get("max_level", o.max_level);
  r.get("convergence_tol", o.convergence_tol);
  r.get("significant", o.significant);
  if (j.contains("fixed_level") && !j.at("fixed_level").is_null()) {
    o.fixed_level = j.at("fixed_level").get<int>();
  }
}

void to_json(json& j, const ParticipationResult& r) {
  json p = json::object();
  for (auto reg : kAllRegions) p[region_name(reg)] = r[reg];
  json unconverged = json::array();
  for (auto reg : r.mesh_stats.unconverged) unconverged.push_back(region_name(reg));
  j = json{{"p", p},
           {"q_tls", opt(r.q_tls)},
           {"energy_total", r.energy_total},
           {"method", r.method == ThinLayerMethod::kDirect ? "direct" : "perturbative"},
           {"mesh_stats",
            {{"nodes", r.mesh_stats.nodes},
             {"elements", r.mesh_stats.elements},
             {"refinement_level", r.mesh_stats.refinement_level},
             {"last_relative_change", opt(r.mesh_stats.last_relative_change)},
             {"unconverged", unconverged}}}};
}

void to_json(json& j, const SmSweep& s) {
  j = json{{"t_values", s.t_values},
           {"results", s.results},
           {"sm_fit",
            {{"slope", s.sm_fit.slope},
             {"intercept", s.sm_fit.intercept},
             {"r_squared", s.sm_fit.r_squared},
             {"window", {s.fit_window_lo, s.fit_window_hi}}}},
           {"corner_fit", s.corner_fit},
           {"crossover_ma", opt(s.crossover_ma)},
           {"crossover_sa", opt(s.crossover_sa)},
           {"ma_variation", s.ma_variation},
           {"sa_variation", s.sa_variation}};
}

void to_json(json& j, const MetalSweep& s) {
  json variation = json::object();
  for (auto reg : kAllRegions) variation[region_name(reg)] = s.variation[static_cast<std::size_t>(reg)];
  j = json{{"t_values", s.t_values},
           {"results", s.results},
           {"variation", variation},
           {"q_tls_variation", s.q_tls_variation}};
}

}  // namespace cpwloss
