#include <algorithm>
#include <optional>
#include <sstream>

#include "context.hpp"
#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/io/trace_io.hpp"
#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss::cli {

namespace {

io::Plot fig1b_plot(const Fig1bSummary& s) {
  io::Plot plot;
  plot.title = "Qubit Q against T1/Tp";
  plot.x = {"T1 / Tp", false};
  plot.y = {"Q", true};
  std::vector<long> thicknesses;
  for (const auto& p : s.points) thicknesses.push_back(p.thickness_nm);
  std::sort(thicknesses.begin(), thicknesses.end());
  thicknesses.erase(std::unique(thicknesses.begin(), thicknesses.end()), thicknesses.end());
  for (long t : thicknesses) {
    io::PlotSeries q{std::to_string(t) + " nm", {}, {}, io::SeriesStyle::kMarkers};
    for (const auto& p : s.points) {
      if (p.thickness_nm != t || !p.included) continue;
      q.x.push_back(p.t1_over_tp);
      q.y.push_back(p.q);
    }
    plot.series.push_back(std::move(q));
  }
  io::PlotSeries excluded{"excluded", {}, {}, io::SeriesStyle::kMarkers};
  for (const auto& p : s.points) {
    if (p.included) continue;
    excluded.x.push_back(p.t1_over_tp);
    excluded.y.push_back(p.q);
  }
  if (!excluded.x.empty()) plot.series.push_back(std::move(excluded));
  return plot;
}

io::Plot histogram_plot(const T1Statistics& stats) {
  io::Plot plot;
  plot.title = "T1 histogram";
  plot.x = {"T1 (us)", false};
  plot.y = {"count", false};
  io::PlotSeries bars{"count", {}, {}, io::SeriesStyle::kLine};
  const auto& h = stats.histogram;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double lo = units::to_us(h.origin + static_cast<double>(i) * h.bin_width);
    const double hi = units::to_us(h.origin + static_cast<double>(i + 1) * h.bin_width);
    const auto c = static_cast<double>(h.counts[i]);
    bars.x.insert(bars.x.end(), {lo, lo, hi, hi});
    bars.y.insert(bars.y.end(), {0.0, c, c, 0.0});
  }
  plot.series.push_back(std::move(bars));
  return plot;
}

struct DecayOutcome {
  fs::path file;
  std::optional<T1Fit> fit;
  std::string error;
};

int decay_report(Context& ctx, const std::vector<std::string>& decay_inputs) {
  const auto files = expand_inputs(decay_inputs, {".csv"});
  if (files.empty()) throw ValidationError("qubit-report: no decay files found");
  std::vector<DecayOutcome> outcomes(files.size());
  {
    io::StageTimer timer(ctx.manifest, "t1-fit");
    parallel_for(files.size(), ctx.config.jobs, [&](std::size_t k) {
      auto& o = outcomes[k];
      o.file = files[k];
      try {
        o.fit = fit_t1(io::read_decay(files[k].string()));
      } catch (const std::exception& e) {
        o.error = e.what();
      }
    });
  }
  nlohmann::json records = nlohmann::json::array();
  std::ostringstream csv;
  csv << "file,t1_us,t1_stderr_us,amplitude,offset,status\n";
  std::vector<double> t1s;
  std::size_t failures = 0;
  for (const auto& o : outcomes) {
    nlohmann::json rec{{"file", o.file.string()}, {"ok", o.fit.has_value()}};
    csv << o.file.filename().string() << ',';
    if (o.fit) {
      ctx.manifest.add_input(o.file);
      rec["fit"] = *o.fit;
      t1s.push_back(o.fit->t1);
      csv << io::format_double(units::to_us(o.fit->t1)) << ','
          << io::format_double(units::to_us(o.fit->t1_stderr)) << ','
          << io::format_double(o.fit->amplitude) << ',' << io::format_double(o.fit->offset)
          << ",ok\n";
    } else {
      ++failures;
      rec["error"] = o.error;
      ctx.error(o.file.string() + ": " + o.error);
      csv << ",,,,error\n";
    }
    records.push_back(rec);
  }
  nlohmann::json report{{"records", records}};
  if (t1s.size() >= 2) {
    const auto stats = t1_statistics(t1s);
    report["statistics"] = stats;
    ctx.emit_plot("fig1c_t1_histogram", histogram_plot(stats));
  }
  ctx.emit_json("t1_fits.json", report);
  ctx.emit("t1_fits.csv", csv.str());
  return failures == 0 ? kExitOk : kExitItemErrors;
}

}  // namespace

int cmd_qubit_report(Context& ctx, const QubitReportArgs& args) {
  std::string path = args.dataset;
  if (path.empty()) path = ctx.config.qubit_table;
  if (path.empty()) path = bundled_qubit_table_path();
  std::vector<QubitRecord> records;
  {
    io::StageTimer timer(ctx.manifest, "load");
    records = load_qubit_table(path);
    ctx.manifest.add_input(path);
  }
  if (records.empty()) throw ParseError(path + ": no qubit rows");
  if (!args.thickness_nm.empty()) {
    std::erase_if(records, [&](const QubitRecord& r) {
      return std::find(args.thickness_nm.begin(), args.thickness_nm.end(), r.thickness_nm()) ==
             args.thickness_nm.end();
    });
    if (records.empty()) throw ValidationError("qubit-report: no records at the requested thicknesses");
  }

  io::StageTimer timer(ctx.manifest, "report");
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "label,thickness_nm,f_q_ghz,t1_us,t_purcell_us,t1_over_tp,q,q_tls,included,reason\n";
  for (auto& r : records) {
    const auto screening = screen_qubit(r);
    r.included = screening.included;
    const auto budget = qubit_loss_budget(r);
    rows.push_back({{"record", r}, {"screening", screening}, {"budget", budget}});
    csv << r.label << ',' << r.thickness_nm() << ',' << io::format_double(units::to_ghz(r.f_q))
        << ',' << io::format_double(units::to_us(r.t1_mean)) << ','
        << io::format_double(units::to_us(r.t_purcell)) << ','
        << io::format_double(r.t1_mean / r.t_purcell) << ','
        << io::format_double(quality_factor(r.f_q, r.t1_mean)) << ','
        << (budget.q_tls ? io::format_double(*budget.q_tls) : "") << ','
        << (screening.included ? "true" : "false") << ',' << screening.reason << '\n';
  }
  const auto summary = aggregate_fig1b(records);
  const auto included = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.included; }));
  ctx.emit_json("report.json", {{"dataset", path},
                                {"records", rows},
                                {"included", included},
                                {"excluded", records.size() - included},
                                {"fig1b", summary}});
  ctx.emit("report.csv", csv.str());
  ctx.emit_plot("fig1b_q_vs_t1_over_tp", fig1b_plot(summary));
  ctx.info("qubit-report: " + std::to_string(included) + " of " + std::to_string(records.size()) +
           " qubits included");

  if (args.decay.empty()) return kExitOk;
  return decay_report(ctx, args.decay);
}

}  // namespace cpwloss::cli
