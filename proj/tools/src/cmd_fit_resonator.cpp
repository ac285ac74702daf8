#include <cmath>
#include <optional>
#include <sstream>

#include "context.hpp"
#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/io/trace_io.hpp"
#include "cpwloss/resonance_fit.hpp"

namespace cpwloss::cli {

namespace {

struct Outcome {
  fs::path file;
  std::optional<ComplexTrace> trace;
  std::optional<ResonatorFitResult> fit;
  std::string error;
};

io::Plot s21_plot(const Outcome& o) {
  const auto& t = *o.trace;
  const auto& f = *o.fit;
  const NotchModelParams model{f.fr, f.ql, f.qc_mag, f.phi, f.a, f.alpha, f.tau};
  io::Plot plot;
  plot.title = o.file.filename().string() + ": |S21|";
  plot.x.label = "frequency (GHz)";
  plot.y.label = "|S21| (dB)";
  io::PlotSeries data{"data", {}, {}, io::SeriesStyle::kMarkers};
  io::PlotSeries fitted{"fit", {}, {}, io::SeriesStyle::kLine};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ghz = t.frequencies[i] * 1e-9;
    data.x.push_back(ghz);
    data.y.push_back(20.0 * std::log10(std::abs(t.s21[i])));
    fitted.x.push_back(ghz);
    fitted.y.push_back(20.0 * std::log10(std::abs(notch_model(model, t.frequencies[i]))));
  }
  plot.series = {data, fitted};
  return plot;
}

}  // namespace

int cmd_fit_resonator(Context& ctx, const FitResonatorArgs& args) {
  const auto files = expand_inputs(args.inputs, {".csv", ".s2p"});
  if (files.empty()) throw ValidationError("fit-resonator: no trace files found");
  std::vector<Outcome> outcomes(files.size());
  {
    io::StageTimer timer(ctx.manifest, "fit");
    parallel_for(files.size(), ctx.config.jobs, [&](std::size_t k) {
      auto& o = outcomes[k];
      o.file = files[k];
      try {
        o.trace = io::read_trace(files[k].string());
        o.fit = fit_resonator(*o.trace);
      } catch (const std::exception& e) {
        o.error = e.what();
      }
    });
  }

  io::StageTimer timer(ctx.manifest, "emit");
  nlohmann::json records = nlohmann::json::array();
  std::ostringstream csv;
  csv << "file,fr,ql,qc_mag,phi,qi,qi_stderr,residual_rms,status\n";
  std::size_t failures = 0;
  for (const auto& o : outcomes) {
    if (o.trace) ctx.manifest.add_input(o.file);
    nlohmann::json rec{{"file", o.file.string()}, {"ok", o.fit.has_value()}};
    if (o.fit) {
      rec["fit"] = *o.fit;
      rec["drive"] = {{"applied_power_dbm", o.trace->applied_power_dbm},
                      {"line_attenuation_db", o.trace->line_attenuation_db},
                      {"temperature", o.trace->temperature}};
      const auto& f = *o.fit;
      csv << o.file.filename().string() << ',' << io::format_double(f.fr) << ','
          << io::format_double(f.ql) << ',' << io::format_double(f.qc_mag) << ','
          << io::format_double(f.phi) << ',' << io::format_double(f.qi) << ','
          << io::format_double(f.uncertainties.qi) << ',' << io::format_double(f.residual_rms)
          << ",ok\n";
      if (args.plots) ctx.emit_plot(fs::path("plots") / (o.file.stem().string() + "_s21"), s21_plot(o));
    } else {
      ++failures;
      rec["error"] = o.error;
      ctx.error(o.file.string() + ": " + o.error);
      csv << o.file.filename().string() << ",,,,,,,,error\n";
    }
    records.push_back(rec);
  }
  ctx.emit_json("fits.json", {{"records", records}});
  ctx.emit("fits.csv", csv.str());
  ctx.info("fit-resonator: " + std::to_string(outcomes.size() - failures) + " of " +
           std::to_string(outcomes.size()) + " traces fitted");
  return failures == 0 ? kExitOk : kExitItemErrors;
}

}  // namespace cpwloss::cli
