#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "context.hpp"
#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/io/trace_io.hpp"
#include "cpwloss/resonance_fit.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/units.hpp"

// Sweep manifest: one row per power point. Columns
//   label, film_thickness_nm, applied_power_dbm
// plus either `trace` (path relative to the manifest, fitted here) or the
// inline fit columns fr, qc_mag, qi (or ql), with optional phi and qi_err.
// An attenuation_db column overrides the configured total attenuation.

namespace cpwloss::cli {

namespace {

struct Row {
  std::size_t line = 0;
  std::string label;
  double thickness = 0.0;
  std::optional<double> power_dbm;
  std::optional<double> attenuation_db;
  std::string trace;
  std::optional<double> fr, ql, qi, qc_mag, phi, qi_err;
};

struct Sweep {
  ResonatorSweepRecord record;
  std::string error;
};

std::optional<double> cell(const io::CsvTable& t, const io::CsvRow& r, const char* name) {
  const auto c = t.column(name);
  if (!c || *c >= r.cells.size()) return std::nullopt;
  const auto text = io::trim(r.cells[*c]);
  if (text.empty()) return std::nullopt;
  return io::parse_double(text, r.line);
}

std::vector<Row> read_rows(const io::CsvTable& table) {
  const std::size_t label_col = table.require_column("label");
  table.require_column("film_thickness_nm");
  const auto trace_col = table.column("trace");
  std::vector<Row> rows;
  for (const auto& r : table.rows) {
    Row row;
    row.line = r.line;
    if (label_col < r.cells.size()) row.label = std::string(io::trim(r.cells[label_col]));
    if (row.label.empty()) throw ParseError("line " + std::to_string(r.line) + ": empty label");
    const auto t = cell(table, r, "film_thickness_nm");
    if (!t) throw ParseError("line " + std::to_string(r.line) + ": missing film_thickness_nm");
    row.thickness = units::nm(*t);
    row.power_dbm = cell(table, r, "applied_power_dbm");
    row.attenuation_db = cell(table, r, "attenuation_db");
    if (trace_col && *trace_col < r.cells.size()) row.trace = std::string(io::trim(r.cells[*trace_col]));
    row.fr = cell(table, r, "fr");
    row.ql = cell(table, r, "ql");
    row.qi = cell(table, r, "qi");
    row.qc_mag = cell(table, r, "qc_mag");
    row.phi = cell(table, r, "phi");
    row.qi_err = cell(table, r, "qi_err");
    rows.push_back(std::move(row));
  }
  return rows;
}

PowerSweepPoint to_point(const Row& row, const fs::path& base, const io::ProjectConfig& cfg,
                         std::vector<fs::path>& inputs) {
  const std::string where = "line " + std::to_string(row.line) + ": ";
  CalibrationContext cal = cfg.calibration;
  if (row.attenuation_db) cal.total_attenuation = *row.attenuation_db;
  ResonatorFitResult fit;
  std::optional<double> power = row.power_dbm;
  if (!row.trace.empty()) {
    const fs::path path = base / row.trace;
    const auto trace = io::read_trace(path.string());
    inputs.push_back(path);
    fit = fit_resonator(trace);
    if (!power) power = trace.applied_power_dbm;
    if (!row.attenuation_db && trace.line_attenuation_db != 0.0) {
      cal.total_attenuation = trace.line_attenuation_db;
    }
  } else {
    if (!row.fr || !row.qc_mag || !(row.qi || row.ql)) {
      throw ParseError(where + "needs a trace or inline fr, qc_mag and qi (or ql)");
    }
    const double phi = row.phi.value_or(0.0);
    double ql = 0.0;
    if (row.ql) {
      ql = *row.ql;
    } else {
      ql = 1.0 / (1.0 / *row.qi + std::cos(phi) / *row.qc_mag);
    }
    fit = make_resonator_fit(*row.fr, ql, *row.qc_mag, phi, 0.0, 1.0, 0.0);
    if (row.qi_err) fit.uncertainties.qi = *row.qi_err;
  }
  if (!power) throw ParseError(where + "missing applied_power_dbm");
  return make_sweep_point(fit, *power, cal, cfg.coupling);
}

io::Plot qi_plot(const std::vector<Sweep>& sweeps) {
  io::Plot plot;
  plot.title = "Internal Q against photon number";
  plot.x = {"<n>", true};
  plot.y = {"Qi", true};
  for (const auto& s : sweeps) {
    if (!s.error.empty()) continue;
    const auto& r = s.record;
    io::PlotSeries data{r.label, {}, {}, io::SeriesStyle::kMarkers};
    for (const auto& p : r.points) {
      data.x.push_back(p.n_photons);
      data.y.push_back(p.fit.qi);
    }
    io::PlotSeries model{r.label + " model", {}, {}, io::SeriesStyle::kLine};
    const double lo = r.points.front().n_photons;
    const double hi = r.points.back().n_photons;
    for (double n : log_spaced(std::max(lo, 1e-3), hi, 60)) {
      model.x.push_back(n);
      model.y.push_back(tls_qi_model(*r.tls_fit, n, r.frequency()));
    }
    plot.series.push_back(std::move(data));
    plot.series.push_back(std::move(model));
  }
  return plot;
}

io::Plot fdelta_plot(const TlsAggregate& agg) {
  io::Plot plot;
  plot.title = "F delta_TLS against resonance frequency";
  plot.x = {"frequency (GHz)", false};
  plot.y = {"F delta_TLS", true};
  double f_lo = 0.0;
  double f_hi = 0.0;
  for (const auto& p : agg.series) {
    const double g = units::to_ghz(p.frequency);
    f_lo = f_lo == 0.0 ? g : std::min(f_lo, g);
    f_hi = std::max(f_hi, g);
  }
  for (const auto& g : agg.groups) {
    io::PlotSeries pts{std::to_string(g.thickness_nm) + " nm", {}, {}, io::SeriesStyle::kMarkers};
    for (const auto& p : agg.series) {
      if (p.thickness_nm != g.thickness_nm) continue;
      pts.x.push_back(units::to_ghz(p.frequency));
      pts.y.push_back(p.f_delta_tls);
    }
    plot.series.push_back(std::move(pts));
    plot.series.push_back({std::to_string(g.thickness_nm) + " nm mean",
                           {f_lo, f_hi},
                           {g.f_delta_mean, g.f_delta_mean},
                           io::SeriesStyle::kDashed});
  }
  return plot;
}

}  // namespace

int cmd_fit_tls(Context& ctx, const FitTlsArgs& args) {
  const fs::path manifest_path(args.manifest);
  const auto table = io::read_csv_file(args.manifest);
  ctx.manifest.add_input(manifest_path);
  const auto rows = read_rows(table);
  if (rows.empty()) throw ValidationError(args.manifest + ": no sweep rows");

  // Group by label, keeping first-appearance order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Row*>> by_label;
  for (const auto& r : rows) {
    auto& group = by_label[r.label];
    if (group.empty()) order.push_back(r.label);
    group.push_back(&r);
  }

  const fs::path base = manifest_path.parent_path();
  std::vector<Sweep> sweeps(order.size());
  std::vector<std::vector<fs::path>> inputs(order.size());
  {
    io::StageTimer timer(ctx.manifest, "fit");
    parallel_for(order.size(), ctx.config.jobs, [&](std::size_t k) {
      auto& s = sweeps[k];
      s.record.label = order[k];
      try {
        const auto& group = by_label.at(order[k]);
        s.record.film_thickness = group.front()->thickness;
        for (const Row* r : group) {
          if (r->thickness != s.record.film_thickness) {
            throw ValidationError("line " + std::to_string(r->line) +
                                  ": film thickness differs within sweep " + order[k]);
          }
          s.record.points.push_back(to_point(*r, base, ctx.config, inputs[k]));
        }
        std::sort(s.record.points.begin(), s.record.points.end(),
                  [](const auto& a, const auto& b) { return a.n_photons < b.n_photons; });
        s.record.tls_fit =
            fit_tls(s.record, s.record.frequency(), ctx.config.calibration.temperature);
      } catch (const std::exception& e) {
        s.error = e.what();
      }
    });
  }

  io::StageTimer timer(ctx.manifest, "emit");
  for (const auto& in : inputs) {
    for (const auto& p : in) ctx.manifest.add_input(p);
  }
  nlohmann::json records = nlohmann::json::array();
  std::ostringstream csv;
  csv << "label,film_thickness_nm,frequency_hz,points,f_delta_tls,f_delta_tls_err,n_c,beta,delta0,"
         "delta0_err,residual_rms,status\n";
  std::vector<ResonatorSweepRecord> fitted;
  std::size_t failures = 0;
  for (const auto& s : sweeps) {
    const auto& r = s.record;
    nlohmann::json rec{{"label", r.label},
                       {"film_thickness_nm", std::lround(units::to_nm(r.film_thickness))},
                       {"points", r.points.size()},
                       {"ok", s.error.empty()}};
    csv << r.label << ',' << std::lround(units::to_nm(r.film_thickness)) << ',';
    if (s.error.empty()) {
      const auto& f = *r.tls_fit;
      rec["frequency"] = r.frequency();
      rec["fit"] = f;
      csv << io::format_double(r.frequency()) << ',' << r.points.size() << ','
          << io::format_double(f.f_delta_tls) << ',' << io::format_double(f.uncertainties.f_delta_tls)
          << ',' << io::format_double(f.n_c) << ',' << io::format_double(f.beta) << ','
          << io::format_double(f.delta0) << ',' << io::format_double(f.uncertainties.delta0) << ','
          << io::format_double(f.residual_rms) << ",ok\n";
      fitted.push_back(r);
    } else {
      ++failures;
      rec["error"] = s.error;
      ctx.error("sweep " + r.label + ": " + s.error);
      csv << ',' << r.points.size() << ",,,,,,,,error\n";
    }
    records.push_back(rec);
  }

  nlohmann::json report{{"records", records}};
  if (!fitted.empty()) {
    const auto agg = aggregate_by_thickness(fitted);
    report["aggregate_by_thickness"] = agg;
    nlohmann::json spectrum = nlohmann::json::array();
    for (const auto& d : delta0_spectrum(fitted)) {
      spectrum.push_back({{"thickness_nm", d.thickness_nm},
                          {"frequencies", d.frequencies},
                          {"delta0", d.delta0},
                          {"slope_per_hz", d.slope_per_hz}});
    }
    report["delta0_spectrum"] = spectrum;
    ctx.emit_plot("fig2a_qi_vs_n", qi_plot(sweeps));
    ctx.emit_plot("fig2b_fdelta_vs_frequency", fdelta_plot(agg));
  }
  ctx.emit_json("tls_fits.json", report);
  ctx.emit("tls_summary.csv", csv.str());
  ctx.info("fit-tls: " + std::to_string(fitted.size()) + " of " + std::to_string(sweeps.size()) +
           " sweeps fitted");
  return failures == 0 ? kExitOk : kExitItemErrors;
}

}  // namespace cpwloss::cli
